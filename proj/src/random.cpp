#include "enopt/random.hpp"

#include <array>

namespace enopt {

std::uint64_t mix_seed(std::uint64_t value) noexcept {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

std::uint64_t Rng::derive_seed(std::uint64_t base_seed,
                               std::uint64_t index) noexcept {
  return mix_seed(mix_seed(base_seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed) {
  std::array<std::uint32_t, 8> words{};
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < words.size(); i += 2) {
    state = mix_seed(state);
    words[i] = static_cast<std::uint32_t>(state);
    words[i + 1] = static_cast<std::uint32_t>(state >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seeded_engine(seed)) {}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return uniform_(engine_); }

}  // namespace enopt
