#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "recourse/model_api.hpp"
#include "recourse/surrogate.hpp"

namespace recourse {

/// Directions with norm at or below this fraction of their source normal
/// are treated as degenerate.
inline constexpr double kDegenerateTolerance = 1e-10;
inline constexpr double kOrthogonalityTolerance = 1e-8;
inline constexpr double kIntersectionTolerance = 1e-6;
inline constexpr std::size_t kIntersectionCycles = 20;

/// Orthogonal projection of z onto the plane; throws on a zero normal.
LatentVector project_onto_hyperplane(const LatentVector& z, const Hyperplane& plane);

/// Distance from z to the plane.
double plane_distance(std::span<const double> z, const Hyperplane& plane);

struct IntersectionOptions {
  std::size_t max_cycles = kIntersectionCycles;
  double tol = kIntersectionTolerance;
  /// Gearhart-Koshy line search along each cycle's displacement.
  bool accelerate = true;
};

struct IntersectionResult {
  LatentVector z;
  double residual = 0.0;  // max over planes of distance to the plane
  bool converged = false;
  std::size_t cycles = 0;
  std::vector<double> residual_trace;  // residual of the iterate after each cycle
};

/// Cyclic projections onto every plane in turn until all are satisfied to
/// `tol`. Inconsistent systems return the best iterate with converged = false.
IntersectionResult project_onto_intersection(const LatentVector& z, const std::vector<Hyperplane>& planes,
                                             const IntersectionOptions& options = {});

/// Maximum over planes of distance from z.
double intersection_residual(std::span<const double> z, const std::vector<Hyperplane>& planes);

/// Modified Gram-Schmidt on the columns of `columns`; columns whose
/// remainder falls to kDegenerateTolerance of their original norm are dropped.
/// Returns the orthonormal columns kept, and for each input column whether it was kept.
struct GramSchmidtResult {
  std::vector<Vec> q;
  std::vector<bool> kept;
};
GramSchmidtResult modified_gram_schmidt(const std::vector<Vec>& columns);

struct DirectionBasis {
  std::map<std::string, Vec> directions;  // free features with a usable direction
  std::set<std::string> frozen;
  std::set<std::string> free;
  std::set<std::string> unreachable;  // free features whose normal lies in the frozen span
};

/// For each free feature a, c_a = n_a with its component in span{n_j : j frozen}
/// removed. Frozen normals are factored first so their Q columns span them exactly.
DirectionBasis orthogonalize_directions(const std::map<std::string, Vec>& normals, const std::set<std::string>& frozen,
                                        const std::set<std::string>& free);

}  // namespace recourse
