// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "frag/adam.hpp"
#include "frag/csv.hpp"
#include "frag/dataset.hpp"
#include "frag/error.hpp"
#include "frag/fragmentation.hpp"
#include "frag/gen_eval.hpp"
#include "frag/network.hpp"
#include "frag/parallel.hpp"
#include "frag/plane.hpp"
#include "frag/regions.hpp"
#include "frag/tensor.hpp"
#include "frag/trainer.hpp"
#include "frag/triplets.hpp"
#include "frag/weights_io.hpp"
