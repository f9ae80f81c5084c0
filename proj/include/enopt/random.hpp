#pragma once

#include <cstdint>
#include <random>

namespace enopt {

/// splitmix64 finalizer; used to derive independent child seeds.
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t value) noexcept;

/// Value-like normal generator. Child streams are keyed by (seed, index) so
/// that work units can be scheduled in any order and still see the same
/// numbers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  [[nodiscard]] static Rng child(std::uint64_t base_seed, std::uint64_t index) {
    return Rng(derive_seed(base_seed, index));
  }
  [[nodiscard]] Rng child(std::uint64_t index) const {
    return Rng(derive_seed(seed_, index));
  }
  [[nodiscard]] static std::uint64_t derive_seed(std::uint64_t base_seed,
                                                 std::uint64_t index) noexcept;

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  double normal();
  double uniform();
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace enopt
