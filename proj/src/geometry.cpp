#include "recourse/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "recourse/error.hpp"

namespace recourse {
namespace {

void check_plane(const Hyperplane& plane, std::size_t dim) {
  if (plane.normal.size() != dim)
    throw PreconditionError("hyperplane has dimension " + std::to_string(plane.normal.size()) + ", point has " +
                            std::to_string(dim));
  if (norm(plane.normal) == 0.0) throw PreconditionError("hyperplane has a zero normal");
}

/// Projects in place; returns the squared step length.
double project_inplace(Vec& z, const Hyperplane& plane) {
  const double nn = dot(plane.normal, plane.normal);
  const double coef = plane.signed_value(z) / nn;
  axpy(-coef, plane.normal, z);
  return coef * coef * nn;
}

}  // namespace

LatentVector project_onto_hyperplane(const LatentVector& z, const Hyperplane& plane) {
  check_plane(plane, z.size());
  LatentVector out = z;
  project_inplace(out.z, plane);
  return out;
}

double plane_distance(std::span<const double> z, const Hyperplane& plane) {
  return std::abs(plane.signed_value(z)) / norm(plane.normal);
}

double intersection_residual(std::span<const double> z, const std::vector<Hyperplane>& planes) {
  double r = 0.0;
  for (const auto& p : planes) r = std::max(r, plane_distance(z, p));
  return r;
}

IntersectionResult project_onto_intersection(const LatentVector& z, const std::vector<Hyperplane>& planes,
                                             const IntersectionOptions& options) {
  if (planes.empty()) throw PreconditionError("intersection needs at least one hyperplane");
  for (const auto& p : planes) check_plane(p, z.size());

  IntersectionResult out;
  out.z = z;
  out.residual = intersection_residual(z.z, planes);
  out.converged = out.residual <= options.tol;
  if (out.converged) return out;

  Vec x = z.z;
  for (std::size_t cycle = 1; cycle <= options.max_cycles; ++cycle) {
    Vec swept = x;
    double step_sq = 0.0;
    for (const auto& p : planes) step_sq += project_inplace(swept, p);

    // After the first sweep the iterate sits on the last plane. From there,
    // minimizing distance to the intersection along x -> T(x) has the closed
    // form t = 1/2 + sum|steps|^2 / (2 |x - T(x)|^2).
    if (options.accelerate && cycle > 1) {
      const Vec disp = sub(swept, x);
      const double disp_sq = dot(disp, disp);
      if (disp_sq > 0.0) {
        const double t = 0.5 + step_sq / (2.0 * disp_sq);
        if (std::isfinite(t) && t >= 1.0 && t < 1e8) {
          swept = x;
          axpy(t, disp, swept);
        }
      }
    }
    x = std::move(swept);

    const double r = intersection_residual(x, planes);
    out.residual_trace.push_back(r);
    out.cycles = cycle;
    if (r < out.residual) {
      out.residual = r;
      out.z.z = x;
    }
    if (r <= options.tol) break;
  }
  out.converged = out.residual <= options.tol;
  return out;
}

GramSchmidtResult modified_gram_schmidt(const std::vector<Vec>& columns) {
  GramSchmidtResult out;
  for (const auto& col : columns) {
    Vec v = col;
    const double original = norm(col);
    // Two passes keep the result orthogonal to working precision.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : out.q) axpy(-dot(q, v), q, v);
    const double remaining = norm(v);
    if (original == 0.0 || remaining <= kDegenerateTolerance * original) {
      out.kept.push_back(false);
      continue;
    }
    for (double& e : v) e /= remaining;
    out.q.push_back(std::move(v));
    out.kept.push_back(true);
  }
  return out;
}

DirectionBasis orthogonalize_directions(const std::map<std::string, Vec>& normals, const std::set<std::string>& frozen,
                                        const std::set<std::string>& free) {
  for (const auto& name : frozen) {
    if (free.count(name)) throw PreconditionError("feature '" + name + "' is both frozen and free");
    if (!normals.count(name)) throw PreconditionError("no normal for frozen feature '" + name + "'");
  }
  for (const auto& name : free)
    if (!normals.count(name)) throw PreconditionError("no normal for free feature '" + name + "'");

  DirectionBasis basis;
  basis.frozen = frozen;
  basis.free = free;

  std::vector<Vec> frozen_normals;
  for (const auto& name : frozen) frozen_normals.push_back(normals.at(name));
  const auto qr = modified_gram_schmidt(frozen_normals);

  for (const auto& name : free) {
    const Vec& n = normals.at(name);
    Vec c = n;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : qr.q) axpy(-dot(q, c), q, c);
    const double n_norm = norm(n);
    if (n_norm == 0.0 || norm(c) <= kDegenerateTolerance * n_norm) {
      basis.unreachable.insert(name);
      continue;
    }
    basis.directions.emplace(name, std::move(c));
  }
  return basis;
}

}  // namespace recourse
