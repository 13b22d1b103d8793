#pragma once

#include <map>
#include <string>
#include <vector>

namespace genfacet {

/// What a simulated user is actually looking for.
struct LatentIntent {
    std::string category;
    std::map<std::string, std::string> constraints;  ///< attribute -> required value
    std::string description;                         ///< category word + constraint values
    std::vector<std::string> target_docs;            ///< sorted ids matching category and constraints

    bool operator==(const LatentIntent&) const = default;
};

}  // namespace genfacet
