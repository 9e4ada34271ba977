// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hylog/bench.hpp"
#include "hylog/cfsm.hpp"
#include "hylog/checkpoint.hpp"
#include "hylog/config_io.hpp"
#include "hylog/gradcheck.hpp"
#include "hylog/hylog_block.hpp"
#include "hylog/kernels.hpp"
#include "hylog/layers.hpp"
#include "hylog/linalg.hpp"
#include "hylog/losses.hpp"
#include "hylog/network.hpp"
#include "hylog/norm.hpp"
#include "hylog/ops.hpp"
#include "hylog/optim.hpp"
#include "hylog/parallel.hpp"
#include "hylog/spatial.hpp"
#include "hylog/synth.hpp"
#include "hylog/tensor.hpp"
#include "hylog/train.hpp"
#include "hylog/vit.hpp"
