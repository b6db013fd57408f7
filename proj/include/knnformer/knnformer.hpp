#pragma once

// Umbrella header: the whole library in one include.

#include "adam.hpp"        // IWYU pragma: export
#include "checkpoint.hpp"  // IWYU pragma: export
#include "core.hpp"        // IWYU pragma: export
#include "data.hpp"        // IWYU pragma: export
#include "document.hpp"    // IWYU pragma: export
#include "embedder.hpp"    // IWYU pragma: export
#include "geometry.hpp"    // IWYU pragma: export
#include "graph.hpp"       // IWYU pragma: export
#include "matching.hpp"    // IWYU pragma: export
#include "metrics.hpp"     // IWYU pragma: export
#include "model.hpp"       // IWYU pragma: export
#include "runconfig.hpp"   // IWYU pragma: export
#include "tensor.hpp"      // IWYU pragma: export
#include "trainer.hpp"     // IWYU pragma: export
