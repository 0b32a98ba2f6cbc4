#pragma once

#include "riskalloc/common.hpp"
#include "riskalloc/scenario.hpp"
#include "riskalloc/risk.hpp"
#include "riskalloc/service.hpp"
#include "riskalloc/policy.hpp"
#include "riskalloc/utility.hpp"
#include "riskalloc/instance.hpp"
#include "riskalloc/dual.hpp"
#include "riskalloc/recovery.hpp"
#include "riskalloc/mixing.hpp"
#include "riskalloc/certify.hpp"
#include "riskalloc/parallel.hpp"
#include "riskalloc/config.hpp"
#include "riskalloc/generators.hpp"
