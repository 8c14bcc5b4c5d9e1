#pragma once

#include "mvpure/errors.hpp"
#include "mvpure/matcore.hpp"
#include "mvpure/random.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/signal_sim.hpp"
#include "mvpure/filters.hpp"
#include "mvpure/indices.hpp"
#include "mvpure/localizer.hpp"
#include "mvpure/rank_sum.hpp"
#include "mvpure/harness.hpp"
#include "mvpure/config.hpp"
#include "mvpure/report.hpp"
#include "mvpure/selftest.hpp"
