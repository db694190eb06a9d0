#pragma once

// Loss-guided decentralized federated learning: clients train locally, pass
// around only the models whose validation loss beats their peers', average
// what they receive, and fold the senders' losses into a lambda-weighted
// adjusted loss.

#include "dfl/config.hpp"
#include "dfl/dataset.hpp"
#include "dfl/engine.hpp"
#include "dfl/errors.hpp"
#include "dfl/io.hpp"
#include "dfl/metrics.hpp"
#include "dfl/model.hpp"
#include "dfl/protocol.hpp"
#include "dfl/rng.hpp"
