#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mmeval {

using Json = nlohmann::json;

// Deterministic JSON encoding used for hashing and for every wire body.
//
//   - object keys sorted by byte-wise lexicographic order
//   - no whitespace outside strings
//   - numbers in shortest round-trip decimal form (std::to_chars); -0 is
//     written as 0 and integral values carry no fraction
//   - strings escape only '"', '\\' and control characters; other UTF-8
//     passes through unchanged
//
// Throws EvalError(MALFORMED_PAYLOAD) on NaN or infinity.
std::string canonicalize(const Json& value);

// Parses a JSON document, mapping parse failures to MALFORMED_PAYLOAD.
Json parse_json(std::string_view text);

}  // namespace mmeval
