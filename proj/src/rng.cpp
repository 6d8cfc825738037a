#include "depgraph/rng.hpp"

#include <sstream>

#include "depgraph/errors.hpp"

namespace depgraph {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  os.precision(17);
  os << std::hexfloat << spare_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  int spare_flag = 0;
  std::string spare;
  is >> engine_ >> spare_flag >> spare;
  if (!is) throw DomainError("malformed RNG state");
  has_spare_ = spare_flag != 0;
  spare_ = std::strtod(spare.c_str(), nullptr);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 over the combined words
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace depgraph
