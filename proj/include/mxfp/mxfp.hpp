// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mxfp/analysis.hpp"
#include "mxfp/block_quant.hpp"
#include "mxfp/error.hpp"
#include "mxfp/matrix.hpp"
#include "mxfp/microtrain.hpp"
#include "mxfp/minifloat.hpp"
#include "mxfp/mx_linalg.hpp"
#include "mxfp/random.hpp"
#include "mxfp/scaling.hpp"
#include "mxfp/tensor_io.hpp"
