#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace demark {

/// A fingerprint identity in [0, 2^bits).
class Fingerprint {
 public:
  static constexpr unsigned kDefaultBits = 10;

  Fingerprint(std::uint32_t id, unsigned bits = kDefaultBits);

  std::uint32_t id() const noexcept { return id_; }
  unsigned bits() const noexcept { return bits_; }
  std::size_t alphabet() const noexcept { return std::size_t{1} << bits_; }

  std::vector<double> one_hot() const;
  /// Most significant bit first.
  std::vector<std::uint8_t> binary() const;

  static Fingerprint from_one_hot(std::span<const double> one_hot);
  static Fingerprint from_binary(std::span<const std::uint8_t> digits);

  bool operator==(const Fingerprint&) const = default;

 private:
  std::uint32_t id_;
  unsigned bits_;
};

/// Number of differing bits between two ids of the given width.
unsigned hamming_distance(std::uint32_t a, std::uint32_t b, unsigned bits);

}  // namespace demark
