#ifndef BSODA_CORE_TYPES_HPP
#define BSODA_CORE_TYPES_HPP

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace bsoda {

/// Dense index into one of the knowledge-base tables. The tag keeps symptom
/// and disease indices from being mixed up.
template <typename Tag>
struct Index {
  std::uint32_t value = 0;

  constexpr Index() = default;
  constexpr explicit Index(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const Index&) const = default;
};

struct SymptomTag {};
struct DiseaseTag {};

using SymptomId = Index<SymptomTag>;
using DiseaseId = Index<DiseaseTag>;

/// Binary observation of a symptom or disease feature.
using BinaryValue = std::uint8_t;

/// Raised when an input file or request body is structurally invalid.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when well-formed input violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller breaks an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a numeric computation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bsoda

template <typename Tag>
struct std::hash<bsoda::Index<Tag>> {
  std::size_t operator()(const bsoda::Index<Tag>& i) const noexcept {
    return std::hash<std::uint32_t>{}(i.value);
  }
};

#endif  // BSODA_CORE_TYPES_HPP
