#include "pursuit/core.hpp"

#include <sstream>

namespace pursuit {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (in.fail()) throw ConfigError("corrupt random stream state");
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  // FNV-1a over the stream name, mixed with the base seed by splitmix64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pursuit
