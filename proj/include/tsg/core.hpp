// Copyright 2026 The TSG Authors.
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

#include "tsg/core/error.hpp"
#include "tsg/core/gradcheck.hpp"
#include "tsg/core/ops.hpp"
#include "tsg/core/parallel.hpp"
#include "tsg/core/params.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/core/tensor_io.hpp"
