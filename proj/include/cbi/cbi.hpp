#pragma once

#include "cbi/core_model.hpp"
#include "cbi/random.hpp"
#include "cbi/dgp.hpp"
#include "cbi/annotation.hpp"
#include "cbi/linalg.hpp"
#include "cbi/estimators.hpp"
#include "cbi/harness.hpp"
#include "cbi/io.hpp"
