#include "mpac/rng.hpp"

#include <sstream>

#include "mpac/errors.hpp"

namespace mpac {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (is.fail()) throw ParseError("bad rng state string");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ stream);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t substream) {
  return splitmix64(derive_seed(base, stream) ^ splitmix64(substream));
}

}  // namespace mpac
