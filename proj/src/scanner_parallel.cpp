#include "jopkit/gadgets.hpp"

#ifdef JOPKIT_HAVE_OPENMP
#include <omp.h>
#endif

namespace jopkit {

// Same contract as scan_image. Candidate extraction dominates scan time and
// each terminator's windows are independent, so terminators fan out across
// threads; per-terminator buckets keep the merged order identical to the
// serial walk.
ScanResult scan_image_parallel(const ElfImage& image, const ScanOptions& opt) {
  ScanResult r;
  const auto terms = find_terminators(image);
  std::vector<std::vector<GadgetCandidate>> buckets(terms.size());

#ifdef JOPKIT_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long i = 0; i < static_cast<long>(terms.size()); ++i) {
    auto cands = extract_candidates(image, terms[i].first, opt.max_window);
    for (GadgetCandidate& cand : cands)
      cand.family = classify(cand, image, opt.conv);
    buckets[i] = std::move(cands);
  }

  for (auto& bucket : buckets)
    for (GadgetCandidate& cand : bucket)
      r.candidates.push_back(std::move(cand));

  r.dispatchers = find_dispatchers(image, opt);
  r.initializers = find_initializers(image, opt);

  for (GadgetCandidate& c : r.candidates) {
    for (const GadgetCandidate& init : r.initializers) {
      if (c.start_addr == init.start_addr && c.length() == init.length()) {
        c.family = Family::Initializer;
        break;
      }
    }
  }
  return r;
}

}  // namespace jopkit
