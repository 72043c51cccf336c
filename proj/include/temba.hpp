#pragma once

#include "temba/errors.hpp"
#include "temba/tensor.hpp"
#include "temba/ops.hpp"
#include "temba/gradcheck.hpp"
#include "temba/random.hpp"
#include "temba/ssm.hpp"
#include "temba/dilation.hpp"
#include "temba/model_config.hpp"
#include "temba/model.hpp"
#include "temba/objectives.hpp"
#include "temba/data.hpp"
#include "temba/checkpoint.hpp"
#include "temba/optim.hpp"
#include "temba/metrics.hpp"
#include "temba/train.hpp"
#include "temba/config.hpp"
#include "temba/toy.hpp"
#include "temba/bench.hpp"
