#pragma once

#include <string>

#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Reads an instance from a JSON file, resolves all cross-references, and
// validates every structural invariant. Throws std::runtime_error on I/O or
// parse failures and std::invalid_argument (naming the offending field) on
// validation failures.
DispatchInstance load_instance(const std::string& path);

// Same as load_instance, but from in-memory JSON text.
DispatchInstance parse_instance_text(const std::string& text);

// Serializes an instance to canonical JSON text. Parsing the result yields a
// structurally equal instance; serialization is deterministic, so equality of
// serialized forms is a usable structural-equality check.
std::string serialize_instance(const DispatchInstance& instance);

// Checks every structural invariant (bounds ordering, cross-references,
// history coverage, connectivity, polygon convexity, ...). Throws
// std::invalid_argument naming the offending field on the first violation.
void validate_instance(const DispatchInstance& instance);

// Verifies that the unit's operating-region vertices form a convex polygon
// (no collinear or repeated corners) and that the quadratic cost surface is
// jointly convex. Throws std::invalid_argument on violation.
void validate_chp_polygon(const ChpUnit& unit);

}  // namespace hydrodispatch
