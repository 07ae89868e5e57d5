#pragma once

#include "loopsim/campaign.hpp"
#include "loopsim/config.hpp"
#include "loopsim/errors.hpp"
#include "loopsim/hidden_variables.hpp"
#include "loopsim/io.hpp"
#include "loopsim/loop.hpp"
#include "loopsim/power.hpp"
#include "loopsim/quantum.hpp"
#include "loopsim/random.hpp"
#include "loopsim/stats.hpp"
