#pragma once

#include "caal/acquisition.hpp"
#include "caal/aerosol.hpp"
#include "caal/bench.hpp"
#include "caal/common.hpp"
#include "caal/data.hpp"
#include "caal/ensemble.hpp"
#include "caal/loop.hpp"
#include "caal/net.hpp"
#include "caal/objective.hpp"
#include "caal/optim.hpp"
#include "caal/rng.hpp"
