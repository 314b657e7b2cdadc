#include "recourse/synthetic.hpp"

#include <cmath>
#include <sstream>

#include "recourse/rng.hpp"

namespace recourse {

std::string make_blobs_csv(std::size_t n, std::uint64_t seed, double margin) {
  Rng rng(seed);
  std::ostringstream out;
  out << "f1,f2,label\n";
  out.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    const bool high = i % 2 == 1;
    const double c = high ? 7.0 : 3.0;
    double f1, f2;
    do {
      f1 = c + 1.2 * rng.normal();
      f2 = c + 1.2 * rng.normal();
    } while (high ? (f1 + f2 - 10.0) / std::sqrt(2.0) < margin : (10.0 - f1 - f2) / std::sqrt(2.0) < margin);
    out << f1 << ',' << f2 << ',' << (high ? "high" : "low") << '\n';
  }
  return out.str();
}

Dataset make_blobs(std::size_t n, std::uint64_t seed, double margin) {
  return ingest_csv_text(make_blobs_csv(n, seed, margin));
}

}  // namespace recourse
