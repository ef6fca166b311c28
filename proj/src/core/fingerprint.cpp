#include "demark/core/fingerprint.hpp"

#include <bit>
#include <string>

#include "demark/core/error.hpp"

namespace demark {

Fingerprint::Fingerprint(std::uint32_t id, unsigned bits) : id_(id), bits_(bits) {
  if (bits == 0 || bits > 24) {
    throw Error(ErrorKind::OutOfRange, "fingerprint width must be in [1, 24] bits");
  }
  if (id >= (std::uint32_t{1} << bits)) {
    throw Error(ErrorKind::OutOfRange, "fingerprint id " + std::to_string(id) +
                                           " outside [0, " +
                                           std::to_string(std::uint32_t{1} << bits) + ")");
  }
}

std::vector<double> Fingerprint::one_hot() const {
  std::vector<double> v(alphabet(), 0.0);
  v[id_] = 1.0;
  return v;
}

std::vector<std::uint8_t> Fingerprint::binary() const {
  std::vector<std::uint8_t> digits(bits_);
  for (unsigned b = 0; b < bits_; ++b) digits[b] = (id_ >> (bits_ - 1 - b)) & 1U;
  return digits;
}

Fingerprint Fingerprint::from_one_hot(std::span<const double> one_hot) {
  const std::size_t m = one_hot.size();
  if (m < 2 || !std::has_single_bit(m)) {
    throw Error(ErrorKind::Dimension, "one-hot length must be a power of two");
  }
  std::size_t hot = m;
  for (std::size_t i = 0; i < m; ++i) {
    if (one_hot[i] == 1.0) {
      if (hot != m) throw Error(ErrorKind::Format, "one-hot vector has several ones");
      hot = i;
    } else if (one_hot[i] != 0.0) {
      throw Error(ErrorKind::Format, "one-hot vector has a non-binary entry");
    }
  }
  if (hot == m) throw Error(ErrorKind::Format, "one-hot vector has no one");
  return Fingerprint(static_cast<std::uint32_t>(hot),
                     static_cast<unsigned>(std::countr_zero(m)));
}

Fingerprint Fingerprint::from_binary(std::span<const std::uint8_t> digits) {
  std::uint32_t id = 0;
  for (auto d : digits) {
    if (d > 1) throw Error(ErrorKind::Format, "binary digit must be 0 or 1");
    id = (id << 1) | d;
  }
  return Fingerprint(id, static_cast<unsigned>(digits.size()));
}

unsigned hamming_distance(std::uint32_t a, std::uint32_t b, unsigned bits) {
  const std::uint32_t mask = bits >= 32 ? ~0U : ((1U << bits) - 1U);
  return static_cast<unsigned>(std::popcount((a ^ b) & mask));
}

}  // namespace demark
