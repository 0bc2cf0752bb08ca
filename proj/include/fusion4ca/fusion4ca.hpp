// Copyright 2026 The Fusion4CA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header for the whole library.

#include "fusion4ca/core/geometry.hpp"
#include "fusion4ca/core/io.hpp"
#include "fusion4ca/core/random.hpp"
#include "fusion4ca/core/tensor.hpp"

#include "fusion4ca/autograd/conv.hpp"
#include "fusion4ca/autograd/gradcheck.hpp"
#include "fusion4ca/autograd/layers.hpp"
#include "fusion4ca/autograd/ops.hpp"
#include "fusion4ca/autograd/tape.hpp"

#include "fusion4ca/synthdata/io.hpp"
#include "fusion4ca/synthdata/raycast.hpp"
#include "fusion4ca/synthdata/scene.hpp"

#include "fusion4ca/encoders/camera.hpp"
#include "fusion4ca/encoders/pillar.hpp"
#include "fusion4ca/encoders/view_transform.hpp"

#include "fusion4ca/adapter/adapter.hpp"
#include "fusion4ca/align/align.hpp"
#include "fusion4ca/auxbranch/auxbranch.hpp"
#include "fusion4ca/coordatt/coordatt.hpp"

#include "fusion4ca/detect/head.hpp"
#include "fusion4ca/detect/losses.hpp"

#include "fusion4ca/pipeline/checkpoint.hpp"
#include "fusion4ca/pipeline/config.hpp"
#include "fusion4ca/pipeline/data.hpp"
#include "fusion4ca/pipeline/forward.hpp"
#include "fusion4ca/pipeline/gradcheck_suite.hpp"
#include "fusion4ca/pipeline/model.hpp"
#include "fusion4ca/pipeline/sample.hpp"
#include "fusion4ca/pipeline/train.hpp"

#include "fusion4ca/eval/json.hpp"
#include "fusion4ca/eval/metrics.hpp"

#include "fusion4ca/cli/render.hpp"
#include "fusion4ca/cli/run.hpp"
