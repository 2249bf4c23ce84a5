#pragma once
// Deterministic random streams.
//
// Every sampler in the library draws from a RandomStream constructed from a
// SeedLineage (master seed, purpose tag, replication index, particle index).
// Streams with different lineages are independent for all practical purposes;
// streams with equal lineages replay the same draw sequence exactly.  This is
// what lets a truncated run, a coupled limit-copy run and a re-run on a
// different thread count consume identical noise without storing it.
//
// Engine: xoshiro256++ seeded through splitmix64.  The generator itself never
// appears in public signatures; everything funnels through RandomStream.

#include <cstddef>
#include <cstdint>

namespace mckv {

// Purpose tags keep unrelated consumers off each other's streams.  Values are
// stable identifiers, not bit flags; new purposes append.
namespace purpose {
inline constexpr std::uint64_t kInitial = 1;     // initial conditions xi^i
inline constexpr std::uint64_t kNoise = 2;       // driving noise realizations
inline constexpr std::uint64_t kRefCloud = 3;    // reference cloud for E2
inline constexpr std::uint64_t kValidation = 4;  // statistical test batteries
inline constexpr std::uint64_t kPicard = 0x100;      // + iteration index
inline constexpr std::uint64_t kPicardTwin = 0x800;  // + iteration index (noise floor)
}  // namespace purpose

struct SeedLineage {
  std::uint64_t master = 0;
  std::uint64_t purpose = 0;
  std::uint64_t replication = 0;
  std::uint64_t particle = 0;
};

std::uint64_t splitmix64(std::uint64_t& state);

class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed);
  std::uint64_t next();

 private:
  std::uint64_t s_[4];
};

class RandomStream {
 public:
  explicit RandomStream(const SeedLineage& lineage);

  std::uint64_t next_u64();
  std::uint64_t uniform_below(std::uint64_t bound);  // unbiased in [0, bound)

  double uniform01();    // [0, 1)
  double uniform_pos();  // (0, 1]
  double uniform(double a, double b);
  double exponential();  // mean 1
  double normal();       // N(0,1), Box-Muller with pair cache

  // Count of a Poisson(mean) variable; inversion for small means, recursive
  // halving above 30 so the CDF walk stays short and well-conditioned.
  long poisson(double mean);

  void fill_normal(double* out, std::size_t n);
  void unit_sphere(double* out, std::size_t d);  // uniform direction, |out| = 1

  // Symmetric alpha-stable scalar with characteristic function
  // exp(-|u|^alpha), alpha in (0, 2].  Chambers-Mallows-Stuck.
  double stable_symmetric(double alpha);

  // Positive theta-stable scalar with Laplace transform exp(-s^theta),
  // theta in (0, 1).  Kanter's representation.
  double stable_positive(double theta);

 private:
  Xoshiro256pp gen_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace mckv
