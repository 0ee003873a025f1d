#pragma once

#include "cprn/tensor.hpp"
#include "cprn/autodiff.hpp"
#include "cprn/ops.hpp"
#include "cprn/gradcheck.hpp"
#include "cprn/params.hpp"
#include "cprn/blocks.hpp"
#include "cprn/model.hpp"
#include "cprn/image.hpp"
#include "cprn/resize.hpp"
#include "cprn/dataset.hpp"
#include "cprn/optim.hpp"
#include "cprn/config.hpp"
#include "cprn/checkpoint.hpp"
#include "cprn/train.hpp"
#include "cprn/metrics.hpp"
#include "cprn/synthetic.hpp"
#include "cprn/gradcheck_suite.hpp"
