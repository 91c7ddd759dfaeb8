// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sof/builder.hpp"
#include "sof/criteria.hpp"
#include "sof/dataset.hpp"
#include "sof/decide.hpp"
#include "sof/error.hpp"
#include "sof/estimators.hpp"
#include "sof/forest.hpp"
#include "sof/importance.hpp"
#include "sof/linalg.hpp"
#include "sof/lp.hpp"
#include "sof/node.hpp"
#include "sof/problem.hpp"
#include "sof/qp.hpp"
#include "sof/rng.hpp"
#include "sof/solve.hpp"
#include "sof/tree.hpp"
