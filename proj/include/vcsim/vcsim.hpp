#pragma once

#include "vcsim/errors.hpp"
#include "vcsim/types.hpp"
#include "vcsim/trace_net.hpp"
#include "vcsim/pathing.hpp"
#include "vcsim/bandit.hpp"
#include "vcsim/routers.hpp"
#include "vcsim/jitter.hpp"
#include "vcsim/simcore.hpp"
#include "vcsim/manifest.hpp"
