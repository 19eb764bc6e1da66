#pragma once

#include "funvar/bench.hpp"
#include "funvar/curves.hpp"
#include "funvar/errors.hpp"
#include "funvar/estimators.hpp"
#include "funvar/io.hpp"
#include "funvar/kernel.hpp"
#include "funvar/parallel.hpp"
#include "funvar/pipeline.hpp"
#include "funvar/semimetric.hpp"
#include "funvar/serialize.hpp"
#include "funvar/simulate.hpp"
