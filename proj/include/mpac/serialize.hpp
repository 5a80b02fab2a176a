#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "mpac/net.hpp"

namespace mpac {

// Tagged binary container: a sorted map of named entries, each a
// shaped f64 array (row-major), a string, or a u64. Doubles are stored
// as raw IEEE-754 bits, so a save/load round trip is bit-exact.
struct ArrayEntry {
  std::vector<std::uint32_t> shape;
  std::vector<double> data;
};

using ContainerValue = std::variant<ArrayEntry, std::string, std::uint64_t>;
using Container = std::map<std::string, ContainerValue>;

void save_container(const Container& c, std::ostream& os);
Container load_container(std::istream& is);
void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

// ParamSet <-> container entries under `prefix` ("policy.", ...).
void paramset_to_container(const ParamSet& params, const std::string& prefix,
                           Container& out);
ParamSet paramset_from_container(const Container& c, const std::string& prefix);
bool container_has_paramset(const Container& c, const std::string& prefix);

void optimizer_to_container(const OptimizerState& opt, const std::string& prefix,
                            Container& out);
OptimizerState optimizer_from_container(const Container& c,
                                        const std::string& prefix);

// Standalone ParamSet files (checkpoints of a single network).
void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

}  // namespace mpac
