#pragma once

// Umbrella header for the question recommendation library.

#include "qrec/analytics.hpp"
#include "qrec/core.hpp"
#include "qrec/corpus_io.hpp"
#include "qrec/cosine.hpp"
#include "qrec/gmm.hpp"
#include "qrec/linalg.hpp"
#include "qrec/registry.hpp"
#include "qrec/rng.hpp"
#include "qrec/run_config.hpp"
#include "qrec/som.hpp"
#include "qrec/strategy.hpp"
#include "qrec/testkit.hpp"
