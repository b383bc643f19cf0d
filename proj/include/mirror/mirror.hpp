#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include "mirror/aggregate.hpp"
#include "mirror/analysis_json.hpp"
#include "mirror/backend.hpp"
#include "mirror/bench.hpp"
#include "mirror/config.hpp"
#include "mirror/expectancy.hpp"
#include "mirror/http_backend.hpp"
#include "mirror/memorization.hpp"
#include "mirror/render.hpp"
#include "mirror/replay_backend.hpp"
#include "mirror/service.hpp"
#include "mirror/tokenizer.hpp"
