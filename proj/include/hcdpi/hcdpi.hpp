#pragma once

#include "hcdpi/asymptotic.hpp"
#include "hcdpi/bayes.hpp"
#include "hcdpi/bootstrap.hpp"
#include "hcdpi/dm_sampler.hpp"
#include "hcdpi/error.hpp"
#include "hcdpi/io.hpp"
#include "hcdpi/matrix.hpp"
#include "hcdpi/methods.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/rank_box.hpp"
#include "hcdpi/rng.hpp"
#include "hcdpi/simulation.hpp"
#include "hcdpi/stats.hpp"
