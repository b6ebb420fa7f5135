#pragma once

#include <string>

#include "mfe/market_model.hpp"

namespace mfe {

// Parses a scenario document, validates it, and stamps content_hash with a
// 64-bit hash of the canonicalized (sorted-key, minimal-whitespace) document
// so outputs can attest to the exact inputs that produced them.
// Throws Error("scenario.parse") on malformed JSON, Error("validation") when
// structural invariants fail.
MarketScenario parse_scenario_text(const std::string& text);

// Reads and parses a scenario file; Error("scenario.io") when unreadable.
MarketScenario load_scenario_file(const std::string& path);

}  // namespace mfe
