#pragma once

#include "hairbench/adam.hpp"
#include "hairbench/autograd.hpp"
#include "hairbench/checkpoint.hpp"
#include "hairbench/error.hpp"
#include "hairbench/hairsim.hpp"
#include "hairbench/image.hpp"
#include "hairbench/loss.hpp"
#include "hairbench/metrics.hpp"
#include "hairbench/model.hpp"
#include "hairbench/parallel.hpp"
#include "hairbench/rng.hpp"
#include "hairbench/stats.hpp"
#include "hairbench/tensor.hpp"
#include "hairbench/training.hpp"
