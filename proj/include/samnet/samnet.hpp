#pragma once

#include "samnet/backbone.hpp"
#include "samnet/blending.hpp"
#include "samnet/checkpoint.hpp"
#include "samnet/config.hpp"
#include "samnet/correlation.hpp"
#include "samnet/data.hpp"
#include "samnet/eval.hpp"
#include "samnet/io.hpp"
#include "samnet/losses.hpp"
#include "samnet/matching.hpp"
#include "samnet/optim.hpp"
#include "samnet/pipeline.hpp"
#include "samnet/inference.hpp"
