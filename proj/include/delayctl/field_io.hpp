#pragma once

#include <string>

#include "delayctl/hjb.hpp"
#include "delayctl/spec_io.hpp"

namespace delayctl {

/// A solved field is stored as <stem>.json (grids, configuration, `meta`)
/// next to <stem>.csv with one row per (time node, spatial node):
///   i, t, y1..yn, f, fbar1..fbarm
/// Numbers are written with 17 significant digits so a round trip is exact.
void write_field(const ReducedValueField& field, const std::string& stem, const Json& meta = Json::object());

/// Reads a field written by write_field. `stem` may carry the .json suffix.
ReducedValueField read_field(const std::string& stem);

/// Header part of the export (everything except the values).
Json field_header(const ReducedValueField& field);

}  // namespace delayctl
