#pragma once

#include <string>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/rational.hpp"

namespace exprk::schemes {

// One summand coeff * phi_order(scale * z). Scheme coefficients a_ij(z) and
// b_i(z) are finite sums of these.
struct PhiTerm {
  int order = 1;
  Rational scale = Rational(1);
  Rational coeff = Rational(0);
};

class PhiPolynomial {
 public:
  PhiPolynomial() = default;

  static PhiPolynomial term(int order, const Rational& scale, const Rational& coeff) {
    PhiPolynomial p;
    p.add_term(order, scale, coeff);
    return p;
  }

  void add_term(int order, const Rational& scale, const Rational& coeff) {
    if (order < 1) throw ParameterError("phi order must be >= 1");
    if (!(scale > Rational(0)) || scale > Rational(1))
      throw ParameterError("phi scaling must lie in (0, 1]");
    if (coeff.is_zero()) return;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (terms_[i].order == order && terms_[i].scale == scale) {
        terms_[i].coeff = terms_[i].coeff + coeff;
        if (terms_[i].coeff.is_zero())
          terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(i));
        return;
      }
      if (before(order, scale, terms_[i])) {
        terms_.insert(terms_.begin() + static_cast<std::ptrdiff_t>(i),
                      PhiTerm{order, scale, coeff});
        return;
      }
    }
    terms_.push_back(PhiTerm{order, scale, coeff});
  }

  PhiPolynomial& operator+=(const PhiPolynomial& other) {
    for (const auto& t : other.terms_) add_term(t.order, t.scale, t.coeff);
    return *this;
  }

  PhiPolynomial operator-() const {
    PhiPolynomial p = *this;
    for (auto& t : p.terms_) t.coeff = -t.coeff;
    return p;
  }

  PhiPolynomial times(const Rational& r) const {
    PhiPolynomial p;
    if (r.is_zero()) return p;
    p.terms_ = terms_;
    for (auto& t : p.terms_) t.coeff = t.coeff * r;
    return p;
  }

  bool empty() const { return terms_.empty(); }
  const std::vector<PhiTerm>& terms() const { return terms_; }

  void scale_term(int idx, const Rational& factor) {
    if (idx < 0 || idx >= static_cast<int>(terms_.size()))
      throw ParameterError("term index out of range");
    terms_[static_cast<std::size_t>(idx)].coeff =
        terms_[static_cast<std::size_t>(idx)].coeff * factor;
    if (terms_[static_cast<std::size_t>(idx)].coeff.is_zero())
      terms_.erase(terms_.begin() + idx);
  }

  bool operator==(const PhiPolynomial& o) const {
    if (terms_.size() != o.terms_.size()) return false;
    for (std::size_t i = 0; i < terms_.size(); ++i)
      if (terms_[i].order != o.terms_[i].order || !(terms_[i].scale == o.terms_[i].scale) ||
          !(terms_[i].coeff == o.terms_[i].coeff))
        return false;
    return true;
  }

  // Value at z = 0, where phi_k(0) = 1/k!.
  Rational eval_zero() const {
    Rational v(0);
    for (const auto& t : terms_) v = v + t.coeff / Rational::factorial(t.order);
    return v;
  }

  Rational coefficient(int order, const Rational& scale) const {
    for (const auto& t : terms_)
      if (t.order == order && t.scale == scale) return t.coeff;
    return Rational(0);
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const auto& t = terms_[i];
      Rational c = t.coeff;
      if (i == 0) {
        if (c < Rational(0)) {
          out += "-";
          c = -c;
        }
      } else {
        out += c < Rational(0) ? " - " : " + ";
        if (c < Rational(0)) c = -c;
      }
      if (!(c == Rational(1))) out += c.str() + "*";
      out += "phi" + std::to_string(t.order) + "(";
      if (!(t.scale == Rational(1))) out += t.scale.str() + "*";
      out += "z)";
    }
    return out;
  }

 private:
  static bool before(int order, const Rational& scale, const PhiTerm& t) {
    if (scale < t.scale) return true;
    if (t.scale < scale) return false;
    return order < t.order;
  }

  std::vector<PhiTerm> terms_;
};

inline PhiPolynomial operator+(PhiPolynomial a, const PhiPolynomial& b) {
  a += b;
  return a;
}

}  // namespace exprk::schemes
