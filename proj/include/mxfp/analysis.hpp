// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mxfp/block_quant.hpp"
#include "mxfp/matrix.hpp"
#include "mxfp/minifloat.hpp"
#include "mxfp/scaling.hpp"

namespace mxfp {

/// Quantization statistics for one (format, mode) pair.
///
/// saturation_rate is the fraction of blocks whose amax element had to be
/// clamped; underflow_rate is the fraction of elements that were non-zero but
/// below min_subnormal * 2^X of their block.
struct ModeReport {
  Format format = Format::E4M3;
  ScaleRounding mode = ScaleRounding::RoundUp;
  QuantStats stats;
  double saturation_rate = 0.0;
  double underflow_rate = 0.0;
  std::optional<double> sqnr_db;
  std::map<int, std::size_t> scale_histogram;  // unbiased exponent -> block count; NaN scales omitted
};

struct ModeComparison {
  Format format = Format::E4M3;
  Axis axis = Axis::Row;
  ModeReport round_up;
  ModeReport ocp_floor;
};

inline ModeReport make_report(const QuantizedTensor& q) {
  ModeReport r;
  r.format = q.tensor.format;
  r.mode = q.tensor.mode;
  r.stats = q.stats;
  const auto& s = q.stats;
  r.saturation_rate = s.n_blocks ? static_cast<double>(s.n_saturated_blocks) / static_cast<double>(s.n_blocks) : 0.0;
  r.underflow_rate =
      s.n_elements ? static_cast<double>(s.n_below_min_subnormal) / static_cast<double>(s.n_elements) : 0.0;
  r.sqnr_db = s.sqnr_db();
  for (ScaleByte sb : q.tensor.scales)
    if (!sb.is_nan()) ++r.scale_histogram[sb.exponent()];
  return r;
}

/// Quantize under both scale rounding modes and report side by side.
inline ModeComparison compare_rounding(const Matrix<float>& t, Format format, Axis axis) {
  ModeComparison c;
  c.format = format;
  c.axis = axis;
  c.round_up = make_report(quantize_tensor(t, axis, format, ScaleRounding::RoundUp));
  c.ocp_floor = make_report(quantize_tensor(t, axis, format, ScaleRounding::OcpFloor));
  return c;
}

/// One report per MX element type, same data, same mode.
inline std::vector<ModeReport> dtype_sweep(const Matrix<float>& t, Axis axis, ScaleRounding mode) {
  std::vector<ModeReport> out;
  for (Format f : kAllFormats) out.push_back(make_report(quantize_tensor(t, axis, f, mode)));
  return out;
}

/// Closed-form OcpFloor saturation test for one block amax: with
/// amax = 2^A * 1.Ma and destmax = 2^E * 1.Me the scaled amax is 2^E * 1.Ma,
/// which exceeds destmax exactly when Ma > Me, unless the scale exponent
/// A - E was clamped up to -127.
inline bool ocp_floor_saturates(float amax, Format format) {
  if (!(amax > 0.0f) || !std::isfinite(amax)) return false;
  const auto& fmt = format_info(format);
  const int unclamped = floor_log2(amax) - floor_log2(static_cast<float>(fmt.destmax));
  if (unclamped < ScaleByte::kMinExponent) return false;
  return mantissa_fraction(amax) > mantissa_fraction(fmt.destmax);
}

/// Number of blocks of `t` (along `axis`) that the predicate above flags.
inline std::size_t predicted_ocp_saturated_blocks(const Matrix<float>& t, Format format, Axis axis) {
  std::size_t count = 0;
  const auto values = t.values();
  detail::for_each_block(t.rows(), t.cols(), axis, [&](std::size_t, std::size_t, auto idx) {
    float amax = 0.0f;
    for (std::size_t i : idx) amax = std::max(amax, std::fabs(values[i]));
    if (ocp_floor_saturates(amax, format)) ++count;
  });
  return count;
}

/// Optional provenance fields echoed into reports.
struct ReportSource {
  std::string description;  // e.g. "gaussian 4096x4096" or an input path
  std::optional<std::uint64_t> seed;
  std::string generator;
};

inline nlohmann::json to_json(const ModeReport& r) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(r.mode));
  j["format"] = std::string(to_string(r.format));
  j["saturation_rate"] = r.saturation_rate;
  j["underflow_rate"] = r.underflow_rate;
  j["sqnr_db"] = r.sqnr_db ? nlohmann::json(*r.sqnr_db) : nlohmann::json(nullptr);
  j["n_blocks"] = r.stats.n_blocks;
  j["n_elements"] = r.stats.n_elements;
  j["n_saturated"] = r.stats.n_saturated;
  j["n_flushed_to_zero"] = r.stats.n_flushed_to_zero;
  j["mse"] = r.stats.mse();
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [e, n] : r.scale_histogram) hist[std::to_string(e)] = n;
  j["scale_histogram"] = hist;
  return j;
}

inline nlohmann::json to_json(const std::vector<ModeReport>& reports, const ReportSource& src) {
  nlohmann::json j;
  j["source"] = src.description;
  if (src.seed) {
    j["seed"] = *src.seed;
    j["prng"] = src.generator;
  }
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(to_json(r));
  return j;
}

inline std::string to_text(const std::vector<ModeReport>& reports, const ReportSource& src) {
  std::ostringstream os;
  os << "source " << src.description;
  if (src.seed) os << " seed=" << *src.seed << " prng=" << src.generator;
  os << '\n';
  os << std::left << std::setw(6) << "format" << ' ' << std::setw(10) << "mode" << ' ' << std::right
     << std::setw(10) << "n_blocks" << ' ' << std::setw(16) << "saturation_rate" << ' ' << std::setw(15)
     << "underflow_rate" << ' ' << std::setw(9) << "sqnr_db" << ' ' << std::setw(13) << "mse" << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(6) << to_string(r.format) << ' ' << std::setw(10) << to_string(r.mode) << ' '
       << std::right << std::setw(10) << r.stats.n_blocks << ' ' << std::setw(16) << std::fixed
       << std::setprecision(8) << r.saturation_rate << ' ' << std::setw(15) << r.underflow_rate << ' '
       << std::setw(9) << std::setprecision(3);
    if (r.sqnr_db) os << *r.sqnr_db;
    else os << "n/a";
    os << ' ' << std::setw(13) << std::scientific << std::setprecision(5) << r.stats.mse() << std::defaultfloat
       << '\n';
  }
  return os.str();
}

}  // namespace mxfp
