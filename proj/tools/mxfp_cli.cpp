// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

// mxfp command-line front end.
//
//   mxfp formats
//   mxfp quantize   --in raw.mxt --out q.mxt --format e4m3 [--axis row] [--scale-rounding up]
//   mxfp dequantize --in q.mxt --out raw.mxt
//   mxfp gemm       --a A.mxt --b B.mxt [--format e4m3] [--path exact|bf16] [--out C.mxt]
//   mxfp analyze    [--in raw.mxt | --rows R --cols C --seed S] [--scale-rounding up] [--report text|json]
//   mxfp compare-rounding --format e4m3 [--in raw.mxt | --rows R --cols C --seed S] [--report text|json]
//   mxfp train-demo [--model mlp|attention] [--steps N] [--seed S] [--out trace.txt]
//
// Exit status: 0 success, 1 usage or input error, 2 internal invariant violation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mxfp/mxfp.hpp"

namespace {

using namespace mxfp;

const std::map<std::string, Format> kFormatNames = {{"e4m3", Format::E4M3}, {"e5m2", Format::E5M2},
                                                    {"e2m3", Format::E2M3}, {"e3m2", Format::E3M2},
                                                    {"e2m1", Format::E2M1}};
const std::map<std::string, Axis> kAxisNames = {{"row", Axis::Row}, {"col", Axis::Col}};
const std::map<std::string, ScaleRounding> kModeNames = {{"up", ScaleRounding::RoundUp},
                                                         {"ocp-floor", ScaleRounding::OcpFloor}};
const std::map<std::string, MmaPath> kPathNames = {{"exact", MmaPath::ExactScaled}, {"bf16", MmaPath::Bf16Emulation}};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string in, out, a, b, reference_out;
  std::optional<Format> format;
  std::optional<Format> grad_format;
  Axis axis = Axis::Row;
  ScaleRounding mode = ScaleRounding::RoundUp;
  MmaPath path = MmaPath::ExactScaled;
  std::uint64_t seed = 0;
  std::size_t rows = 1024, cols = 1024;
  std::string report = "text";
  std::string model = "mlp";
  std::size_t steps = 2000;
  float lr = 0.01f;
  bool pass_through = false;
};

Matrix<float> load_raw(const std::string& path, const char* flag) {
  auto t = io::read(path);
  if (!std::holds_alternative<Matrix<float>>(t))
    throw UsageError(std::string(flag) + ": expected a raw binary32 tensor in " + path);
  return std::get<Matrix<float>>(std::move(t));
}

std::string fmt_exp2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "2^%d", static_cast<int>(std::lround(std::log2(v))));
  return buf;
}

int cmd_formats() {
  std::printf("%-6s %12s %14s %8s %s\n", "name", "destmax", "min_subnormal", "binades", "specials");
  for (Format f : kAllFormats) {
    const auto& fmt = format_info(f);
    const char* specials = fmt.special == SpecialConvention::IEEE            ? "ieee (inf, nan)"
                           : fmt.special == SpecialConvention::FiniteOnlyOneNaN ? "finite, one nan"
                                                                               : "finite only";
    std::printf("%-6s %12g %14s %8.1f %s\n", std::string(fmt.name).c_str(), fmt.destmax,
                fmt_exp2(fmt.min_subnormal).c_str(), fmt.binades(), specials);
  }
  return 0;
}

void print_stats(const QuantStats& s) {
  std::printf("blocks %zu  elements %zu  saturated %zu  flushed_to_zero %zu  exact %zu  mse %.6e  sqnr_db ",
              s.n_blocks, s.n_elements, s.n_saturated, s.n_flushed_to_zero, s.n_exact, s.mse());
  if (auto q = s.sqnr_db()) std::printf("%.3f\n", *q);
  else std::printf("n/a\n");
}

int cmd_quantize(const Options& o) {
  const auto source = load_raw(o.in, "--in");
  const auto q = quantize_tensor(source, o.axis, *o.format, o.mode);
  io::write(o.out, q.tensor);
  std::printf("quantized %zux%zu %s axis=%s scale-rounding=%s -> %s\n", source.rows(), source.cols(),
              std::string(to_string(*o.format)).c_str(), std::string(to_string(o.axis)).c_str(),
              std::string(to_string(o.mode)).c_str(), o.out.c_str());
  print_stats(q.stats);
  return 0;
}

int cmd_dequantize(const Options& o) {
  auto t = io::read(o.in);
  if (!std::holds_alternative<MxTensor>(t)) throw UsageError("--in: expected an mx tensor in " + o.in);
  const auto& q = std::get<MxTensor>(t);
  io::write(o.out, dequantize_tensor(q));
  std::printf("dequantized %zux%zu %s -> %s\n", q.rows, q.cols, std::string(to_string(q.format)).c_str(),
              o.out.c_str());
  return 0;
}

int cmd_gemm(const Options& o) {
  auto ta = io::read(o.a);
  auto tb = io::read(o.b);
  const bool raw_a = std::holds_alternative<Matrix<float>>(ta);
  const bool raw_b = std::holds_alternative<Matrix<float>>(tb);
  if ((raw_a || raw_b) && !o.format) throw UsageError("--format is required when --a or --b is a raw tensor");

  Matrix<float> src_a, src_b;
  MxTensor qa, qb;
  if (raw_a) {
    src_a = std::get<Matrix<float>>(ta);
    qa = quantize_tensor(src_a, Axis::Row, *o.format, o.mode).tensor;
  } else {
    qa = std::get<MxTensor>(ta);
    src_a = dequantize_tensor(qa);
  }
  if (raw_b) {
    src_b = std::get<Matrix<float>>(tb);
    qb = quantize_tensor(src_b, Axis::Col, *o.format, o.mode).tensor;
  } else {
    qb = std::get<MxTensor>(tb);
    src_b = dequantize_tensor(qb);
  }

  MmaDiagnostics diag;
  const auto c = mx_matmul(qa, qb, MmaConfig{o.path}, &diag);
  const auto ref = reference_matmul(src_a, src_b);
  double err2 = 0.0, ref2 = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = static_cast<double>(c.values()[i]) - ref.values()[i];
    err2 += d * d;
    ref2 += ref.values()[i] * ref.values()[i];
    max_abs = std::max(max_abs, std::fabs(d));
  }
  if (!o.out.empty()) io::write(o.out, c);
  std::printf("gemm %zux%zu * %zux%zu path=%s\n", qa.rows, qa.cols, qb.rows, qb.cols,
              std::string(to_string(o.path)).c_str());
  std::printf("reference binary64 on %s inputs\n", raw_a && raw_b ? "source" : "source/dequantized");
  std::printf("relative_frobenius_error %.6e\nmax_abs_error %.6e\nbf16_overflow %zu\n",
              ref2 > 0 ? std::sqrt(err2 / ref2) : std::sqrt(err2), max_abs, diag.n_bf16_overflow);
  return 0;
}

std::pair<Matrix<float>, ReportSource> input_tensor(const Options& o) {
  if (!o.in.empty()) return {load_raw(o.in, "--in"), ReportSource{o.in, std::nullopt, {}}};
  ReportSource src{"gaussian " + std::to_string(o.rows) + "x" + std::to_string(o.cols), o.seed,
                   std::string(GaussianSource::kName)};
  return {gaussian_matrix(o.rows, o.cols, o.seed), src};
}

void emit(const std::vector<ModeReport>& reports, const ReportSource& src, const std::string& kind) {
  if (kind == "json") std::cout << to_json(reports, src).dump(2) << '\n';
  else std::cout << to_text(reports, src);
}

int cmd_analyze(const Options& o) {
  const auto [t, src] = input_tensor(o);
  emit(dtype_sweep(t, o.axis, o.mode), src, o.report);
  return 0;
}

int cmd_compare(const Options& o) {
  const auto [t, src] = input_tensor(o);
  const auto c = compare_rounding(t, *o.format, o.axis);
  emit({c.round_up, c.ocp_floor}, src, o.report);
  return 0;
}

void write_trace(const std::string& path, const std::vector<float>& loss) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing", "path");
  out.precision(9);
  for (std::size_t i = 0; i < loss.size(); ++i) out << i << ' ' << loss[i] << '\n';
}

int cmd_train(const Options& o) {
  train::TrainConfig cfg;
  cfg.model = o.model == "attention" ? train::ModelKind::Attention : train::ModelKind::Mlp;
  if (cfg.model == train::ModelKind::Attention) {
    cfg.batch = 16;
    cfg.hidden_dim = 32;
  }
  cfg.steps = o.steps;
  cfg.seed = o.seed;
  cfg.learning_rate = o.lr;
  if (!o.pass_through) {
    const Format f = o.format.value_or(Format::E4M3);
    cfg.quant = train::QuantConfig::uniform(f, o.mode);
    if (o.grad_format) cfg.quant.gradient = *o.grad_format;
    cfg.quant.path = o.path;
  }
  const auto r = train::train(cfg);
  if (!o.out.empty()) write_trace(o.out, r.loss);
  if (!o.reference_out.empty()) write_trace(o.reference_out, r.reference_loss);

  std::printf("model %s steps %zu seed %llu quantization %s\n", o.model.c_str(), r.loss.size(),
              static_cast<unsigned long long>(o.seed), o.pass_through ? "pass-through" : "on");
  if (r.diverged) std::printf("status diverged at step %zu\n", *r.diverged_step);
  else std::printf("status ok\n");
  std::printf("final_eval_loss %.6e\nreference_final_eval_loss %.6e\n", r.final_eval_loss,
              r.reference_final_eval_loss);
  std::printf("saturated_elements %zu\nsaturated_blocks %zu\n", r.quant_stats.n_saturated,
              r.quant_stats.n_saturated_blocks);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microscaling (MX) block floating-point toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_format = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option_function<std::string>(
                        "--format", [&](const std::string& s) { o.format = kFormatNames.at(s); },
                        "element type: e4m3, e5m2, e2m3, e3m2, e2m1")
                    ->transform(CLI::IsMember(kFormatNames, CLI::ignore_case));
    if (required) opt->required();
  };
  auto add_axis = [&](CLI::App* sub) {
    sub->add_option_function<std::string>(
           "--axis", [&](const std::string& s) { o.axis = kAxisNames.at(s); }, "block axis: row or col")
        ->transform(CLI::IsMember(kAxisNames, CLI::ignore_case));
  };
  auto add_mode = [&](CLI::App* sub) {
    sub->add_option_function<std::string>(
           "--scale-rounding", [&](const std::string& s) { o.mode = kModeNames.at(s); },
           "scale rounding: up or ocp-floor")
        ->transform(CLI::IsMember(kModeNames, CLI::ignore_case));
  };
  auto add_path = [&](CLI::App* sub) {
    sub->add_option_function<std::string>(
           "--path", [&](const std::string& s) { o.path = kPathNames.at(s); }, "mma path: exact or bf16")
        ->check(CLI::IsMember(kPathNames));
  };
  auto add_report = [&](CLI::App* sub) {
    sub->add_option("--report", o.report, "report format: text or json")->check(CLI::IsMember({"text", "json"}));
  };
  auto add_source = [&](CLI::App* sub) {
    auto* in = sub->add_option("--in", o.in, "raw tensor (MXT) to analyze")->check(CLI::ExistingFile);
    sub->add_option("--rows", o.rows, "rows of the generated Gaussian tensor")->excludes(in)->check(
        CLI::PositiveNumber);
    sub->add_option("--cols", o.cols, "cols of the generated Gaussian tensor")->excludes(in)->check(
        CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "seed of the generated Gaussian tensor")->excludes(in);
  };

  auto* formats = app.add_subcommand("formats", "print the element format reference table");

  auto* quantize = app.add_subcommand("quantize", "quantize a raw tensor to MX");
  quantize->add_option("--in", o.in, "raw input tensor")->required()->check(CLI::ExistingFile);
  quantize->add_option("--out", o.out, "mx output tensor")->required();
  add_format(quantize, true);
  add_axis(quantize);
  add_mode(quantize);

  auto* dequantize = app.add_subcommand("dequantize", "expand an MX tensor to binary32");
  dequantize->add_option("--in", o.in, "mx input tensor")->required()->check(CLI::ExistingFile);
  dequantize->add_option("--out", o.out, "raw output tensor")->required();

  auto* gemm = app.add_subcommand("gemm", "emulated MX matrix multiply with error report");
  gemm->add_option("--a", o.a, "left operand (mx, row-blocked, or raw)")->required()->check(CLI::ExistingFile);
  gemm->add_option("--b", o.b, "right operand (mx, col-blocked, or raw)")->required()->check(CLI::ExistingFile);
  gemm->add_option("--out", o.out, "raw binary32 result");
  add_path(gemm);
  add_format(gemm, false);
  add_mode(gemm);

  auto* analyze = app.add_subcommand("analyze", "per-format quantization statistics");
  add_source(analyze);
  add_axis(analyze);
  add_mode(analyze);
  add_report(analyze);

  auto* compare = app.add_subcommand("compare-rounding", "round-up vs OCP floor scale statistics");
  add_format(compare, true);
  add_source(compare);
  add_axis(compare);
  add_report(compare);

  auto* train = app.add_subcommand("train-demo", "toy quantized training run with binary32 reference");
  train->add_option("--model", o.model, "mlp or attention")->check(CLI::IsMember({"mlp", "attention"}));
  train->add_option("--steps", o.steps, "training steps (<= 5000)")->check(CLI::Range(1, 5000));
  train->add_option("--seed", o.seed, "seed for initialization and data");
  train->add_option("--lr", o.lr, "learning rate")->check(CLI::PositiveNumber);
  add_format(train, false);
  train->add_option_function<std::string>(
           "--grad-format", [&](const std::string& s) { o.grad_format = kFormatNames.at(s); },
           "gradient element type (defaults to --format)")
      ->transform(CLI::IsMember(kFormatNames, CLI::ignore_case));
  add_mode(train);
  add_path(train);
  auto* pt = train->add_flag("--pass-through", o.pass_through, "disable quantization");
  pt->excludes("--format");
  train->add_option("--out", o.out, "loss trace of the quantized run (step loss)");
  train->add_option("--reference-out", o.reference_out, "loss trace of the binary32 run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mxfp: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*formats) return cmd_formats();
    if (*quantize) return cmd_quantize(o);
    if (*dequantize) return cmd_dequantize(o);
    if (*gemm) return cmd_gemm(o);
    if (*analyze) return cmd_analyze(o);
    if (*compare) return cmd_compare(o);
    if (*train) return cmd_train(o);
  } catch (const UsageError& e) {
    std::cerr << "mxfp: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "mxfp: " << e.what();
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    std::cerr << '\n';
    return e.code() == ErrorCode::InvariantViolation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "mxfp: internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
