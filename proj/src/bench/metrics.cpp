#include "demark/bench/metrics.hpp"

#include <algorithm>
#include <string>

#include "demark/core/error.hpp"
#include "demark/core/fingerprint.hpp"

namespace demark::bench {

namespace {

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::LengthMismatch, "extracted has " + std::to_string(a) + " entries, truth " +
                                               std::to_string(b));
  }
  if (a == 0) throw Error(ErrorKind::InsufficientLength, "metric over an empty list");
}

}  // namespace

double compute_er(std::span<const std::uint32_t> extracted, std::span<const std::uint32_t> truth) {
  check_pair(extracted.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += extracted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double compute_ber(std::span<const std::uint32_t> extracted, std::span<const std::uint32_t> truth,
                   unsigned bits) {
  check_pair(extracted.size(), truth.size());
  if (bits < 1 || bits > 32) throw Error(ErrorKind::OutOfRange, "bit width must be in [1, 32]");
  std::uint64_t errors = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) errors += hamming_distance(extracted[i], truth[i], bits);
  return static_cast<double>(errors) / (static_cast<double>(truth.size()) * bits);
}

TpFp compute_tp_fp(const std::vector<bool>& on_watermarked, const std::vector<bool>& on_clean) {
  if (on_watermarked.empty() || on_clean.empty()) {
    throw Error(ErrorKind::InsufficientLength, "TP/FP need non-empty watermarked and clean sets");
  }
  TpFp out;
  out.watermarked = on_watermarked.size();
  out.clean = on_clean.size();
  out.tp = static_cast<double>(std::count(on_watermarked.begin(), on_watermarked.end(), true)) /
           static_cast<double>(out.watermarked);
  out.fp = static_cast<double>(std::count(on_clean.begin(), on_clean.end(), true)) /
           static_cast<double>(out.clean);
  return out;
}

}  // namespace demark::bench
