#pragma once

#include <iosfwd>
#include <string>

#include "r3d/types.hpp"

namespace r3d {

struct LoadOptions {
  double cutoff = 0.0;
  bool require_t = false;  // fuzzy mode
};

// Long format, header `unit_id,x,t,z,w` with t and w optional columns; one row
// per draw, rows of a unit aggregated in file order, x centered at the cutoff.
UnitSample load_units(std::istream& in, const LoadOptions& opt);
UnitSample load_units_file(const std::string& path, const LoadOptions& opt);

// Writes the sample back in the same long format with cutoff-centered x and
// round-trip exact numbers; reloading with cutoff 0 reproduces the sample.
void save_units(std::ostream& out, const UnitSample& sample);
void save_units_file(const std::string& path, const UnitSample& sample);

}  // namespace r3d
