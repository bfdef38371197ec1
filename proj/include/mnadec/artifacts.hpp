#pragma once

#include "mnadec/decouple.hpp"

#include <string>
#include <vector>

namespace mnadec {

/// Write the chain matrices (Matrix Market), the system description and the variable
/// partition into `outdir`. Returns the paths written, in a fixed order.
std::vector<std::string> write_decouple_artifacts(const Circuit& circuit,
                                                  const DecoupledSystem& system,
                                                  const std::string& outdir);

} // namespace mnadec
