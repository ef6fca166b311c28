#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace demark::bench {

/// Fraction of exact id matches.
double compute_er(std::span<const std::uint32_t> extracted, std::span<const std::uint32_t> truth);

/// Mean Hamming distance over `bits`-wide binary views, divided by `bits`.
double compute_ber(std::span<const std::uint32_t> extracted, std::span<const std::uint32_t> truth,
                   unsigned bits = 10);

struct TpFp {
  double tp = 0.0;
  double fp = 0.0;
  std::size_t watermarked = 0;
  std::size_t clean = 0;
};

/// tp = detected / watermarked, fp = detected / clean.
TpFp compute_tp_fp(const std::vector<bool>& on_watermarked, const std::vector<bool>& on_clean);

}  // namespace demark::bench
