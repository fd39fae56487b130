#pragma once

// Everything except the HTTP embedder, which pulls in httplib
// (include engram/remote_embedder.hpp for that).

#include "engram/errors.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"
#include "engram/embedding.hpp"
#include "engram/config.hpp"
#include "engram/model.hpp"
#include "engram/graph.hpp"
#include "engram/store.hpp"
#include "engram/scoring.hpp"
#include "engram/consolidation.hpp"
#include "engram/forgetting.hpp"
#include "engram/retrieval.hpp"
#include "engram/calibration.hpp"
#include "engram/harness.hpp"
#include "engram/serialization.hpp"
#include "engram/engine.hpp"
