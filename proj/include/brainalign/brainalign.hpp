#pragma once

#include "brainalign/align.hpp"
#include "brainalign/errors.hpp"
#include "brainalign/hash.hpp"
#include "brainalign/parallel.hpp"
#include "brainalign/philox.hpp"
#include "brainalign/pipeline.hpp"
#include "brainalign/reduce.hpp"
#include "brainalign/report.hpp"
#include "brainalign/ridge.hpp"
#include "brainalign/searchlight.hpp"
#include "brainalign/synth.hpp"
#include "brainalign/tensor_io.hpp"
#include "brainalign/textprep.hpp"
