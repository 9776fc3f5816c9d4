#pragma once

#include "gcl/checkpoint.hpp"
#include "gcl/config.hpp"
#include "gcl/contrastive.hpp"
#include "gcl/corpus.hpp"
#include "gcl/decoder.hpp"
#include "gcl/encoder.hpp"
#include "gcl/eval.hpp"
#include "gcl/graph.hpp"
#include "gcl/model.hpp"
#include "gcl/nn.hpp"
#include "gcl/ops.hpp"
#include "gcl/optim.hpp"
#include "gcl/params.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"
#include "gcl/tokenizer.hpp"
#include "gcl/training.hpp"
