#pragma once

#include <cstdint>
#include <string>

#include "recourse/tabular.hpp"

namespace recourse {

/// Two Gaussian blobs in (f1, f2) centred at (3, 3) and (7, 7), labelled
/// "low" and "high". Points within `margin` of the line f1 + f2 = 10 are
/// redrawn, so a linear classifier separates the classes exactly.
std::string make_blobs_csv(std::size_t n, std::uint64_t seed, double margin = 0.5);

Dataset make_blobs(std::size_t n, std::uint64_t seed, double margin = 0.5);

}  // namespace recourse
