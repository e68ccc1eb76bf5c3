#pragma once

#include "mgptq/allocator.hpp"
#include "mgptq/baselines.hpp"
#include "mgptq/calibration.hpp"
#include "mgptq/error.hpp"
#include "mgptq/gptq.hpp"
#include "mgptq/io.hpp"
#include "mgptq/linalg.hpp"
#include "mgptq/quant.hpp"
#include "mgptq/report.hpp"
#include "mgptq/synthetic.hpp"
#include "mgptq/tensor_file.hpp"
#include "mgptq/training.hpp"
