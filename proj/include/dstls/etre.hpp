#pragma once

// Extended time regular expressions over sampled speed signals.
//
// Semantics are discrete: a match is an index interval [b, e) of the signal,
// and the duration of a sub-match is (e - b) * period.
//
//   tube(c, d)        one sample s with |s - c| <= d
//   any               one arbitrary sample
//   x+                one or more concatenated matches of x
//   x . y             x immediately followed by y
//   x | y             either
//   x within [lo,hi]  x, with lo <= duration <= hi
//   any within [lo,hi]
//                     any sample sequence (possibly empty) with
//                     lo <= duration <= hi
//
// Empty matches only arise from `any within [lo,hi]` with lo == 0.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dstls/csv.hpp"
#include "dstls/signal.hpp"

namespace dstls::etre {

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Tube {
  double center = 0.0;
  double delta = 0.0;
};
struct Any {};
struct Concat {
  ExprPtr lhs, rhs;
};
struct Union {
  ExprPtr lhs, rhs;
};
struct Plus {
  ExprPtr inner;
};
struct Within {
  ExprPtr inner;
  double lo = 0.0;
  double hi = 0.0;
};

class Expr {
public:
  using Node = std::variant<Tube, Any, Concat, Union, Plus, Within>;

  explicit Expr(Node node) : node_(std::move(node)) {}

  const Node& node() const { return node_; }

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&node_);
  }

  // Within wrapping Any directly: the duration-bounded Sigma* form.
  bool is_bounded_wildcard() const {
    const auto* w = as<Within>();
    return w && w->inner->as<Any>() != nullptr;
  }

private:
  Node node_;
};

inline ExprPtr tube(double center, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("negative delta");
  if (!std::isfinite(center) || !std::isfinite(delta)) throw std::invalid_argument("non-finite tube");
  return std::make_shared<const Expr>(Tube{center, delta});
}
inline ExprPtr any() { return std::make_shared<const Expr>(Any{}); }
inline ExprPtr concat(ExprPtr a, ExprPtr b) { return std::make_shared<const Expr>(Concat{std::move(a), std::move(b)}); }
inline ExprPtr either(ExprPtr a, ExprPtr b) { return std::make_shared<const Expr>(Union{std::move(a), std::move(b)}); }
inline ExprPtr plus(ExprPtr a) { return std::make_shared<const Expr>(Plus{std::move(a)}); }
inline ExprPtr within(ExprPtr a, double lo, double hi) {
  if (!(lo >= 0.0)) throw std::invalid_argument("negative duration bound");
  if (!(lo <= hi)) throw std::invalid_argument("lo > hi");
  return std::make_shared<const Expr>(Within{std::move(a), lo, hi});
}

// Structural equality.
inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node().index() != b.node().index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node());
        if constexpr (std::is_same_v<T, Tube>) return x.center == y.center && x.delta == y.delta;
        else if constexpr (std::is_same_v<T, Any>) return true;
        else if constexpr (std::is_same_v<T, Concat> || std::is_same_v<T, Union>)
          return *x.lhs == *y.lhs && *x.rhs == *y.rhs;
        else if constexpr (std::is_same_v<T, Plus>) return *x.inner == *y.inner;
        else return x.lo == y.lo && x.hi == y.hi && *x.inner == *y.inner;
      },
      a.node());
}

inline std::size_t depth(const Expr& e) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tube> || std::is_same_v<T, Any>) return 1;
        else if constexpr (std::is_same_v<T, Concat> || std::is_same_v<T, Union>)
          return 1 + std::max(depth(*x.lhs), depth(*x.rhs));
        else return 1 + depth(*x.inner);
      },
      e.node());
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline bool is_binary(const Expr& e) { return e.as<Concat>() || e.as<Union>(); }

inline void print(const Expr& e, std::string& out);

inline void print_wrapped(const Expr& e, bool parens, std::string& out) {
  if (parens) out += '(';
  print(e, out);
  if (parens) out += ')';
}

inline void print(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tube>) {
          out += "tube(" + format_double(x.center) + "," + format_double(x.delta) + ")";
        } else if constexpr (std::is_same_v<T, Any>) {
          out += "any";
        } else if constexpr (std::is_same_v<T, Union>) {
          print(*x.lhs, out);
          out += " | ";
          print_wrapped(*x.rhs, x.rhs->template as<Union>() != nullptr, out);
        } else if constexpr (std::is_same_v<T, Concat>) {
          print_wrapped(*x.lhs, x.lhs->template as<Union>() != nullptr, out);
          out += " . ";
          print_wrapped(*x.rhs, is_binary(*x.rhs), out);
        } else if constexpr (std::is_same_v<T, Plus>) {
          print_wrapped(*x.inner, is_binary(*x.inner), out);
          out += "+";
        } else {
          print_wrapped(*x.inner, is_binary(*x.inner), out);
          out += " within [" + format_double(x.lo) + "," + format_double(x.hi) + "]";
        }
      },
      e.node());
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing
//
//   union   := concat ('|' concat)*
//   concat  := postfix ('.' postfix)*
//   postfix := primary ('+' | 'within' '[' number ',' number ']')*
//   primary := 'tube' '(' number ',' number ')' | 'any' | '(' union ')'

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

private:
  std::size_t position_;
};

namespace detail {

class Parser {
public:
  explicit Parser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    auto e = parse_union();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  bool accept_word(std::string_view word) {
    skip_ws();
    if (text_.substr(pos_, word.size()) != word) return false;
    const std::size_t after = pos_ + word.size();
    if (after < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[after])) || text_[after] == '_'))
      return false;
    pos_ = after;
    return true;
  }

  double number() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        ++pos_;
      } else if ((c == 'e' || c == 'E') && pos_ > start) {
        ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
      } else {
        break;
      }
    }
    try {
      return parse_double(text_.substr(start, pos_ - start));
    } catch (const CsvError&) {
      pos_ = start;
      fail("expected number");
    }
  }

  ExprPtr parse_union() {
    auto lhs = parse_concat();
    while (accept('|')) lhs = either(lhs, parse_concat());
    return lhs;
  }

  ExprPtr parse_concat() {
    auto lhs = parse_postfix();
    while (accept('.')) lhs = concat(lhs, parse_postfix());
    return lhs;
  }

  ExprPtr parse_postfix() {
    auto e = parse_primary();
    for (;;) {
      if (accept('+')) {
        e = plus(e);
      } else if (accept_word("within")) {
        expect('[');
        const std::size_t at = pos_;
        const double lo = number();
        expect(',');
        const double hi = number();
        expect(']');
        if (lo < 0.0) throw ParseError("negative duration bound", at);
        if (lo > hi) throw ParseError("lo > hi", at);
        e = within(e, lo, hi);
      } else {
        return e;
      }
    }
  }

  ExprPtr parse_primary() {
    if (accept('(')) {
      auto e = parse_union();
      expect(')');
      return e;
    }
    if (accept_word("tube")) {
      expect('(');
      const double c = number();
      expect(',');
      const std::size_t at = pos_;
      const double d = number();
      expect(')');
      if (d < 0.0) throw ParseError("negative delta", at);
      return tube(c, d);
    }
    if (accept_word("any")) return any();
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    fail("expected 'tube', 'any' or '('");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ExprPtr parse_etre(std::string_view text) { return detail::Parser(text).parse(); }

// phi_h . phi_t . phi_m | phi_m . phi_t . phi_h, with
//   phi_h = tube(v_h, dv_h)+ within [d,d]
//   phi_m = tube(v_m, dv_m)+ within [d,d]
//   phi_t = any within [0, d_tmax]
inline ExprPtr build_transition_expr(double v_h, double dv_h, double v_m, double dv_m, double d, double d_tmax) {
  for (double x : {v_h, dv_h, v_m, dv_m, d, d_tmax})
    if (!(x >= 0.0)) throw std::invalid_argument("transition expression arguments must be non-negative");
  auto highway = within(plus(tube(v_h, dv_h)), d, d);
  auto motorway = within(plus(tube(v_m, dv_m)), d, d);
  auto transition = within(any(), 0.0, d_tmax);
  return either(concat(concat(highway, transition), motorway), concat(concat(motorway, transition), highway));
}

// ---------------------------------------------------------------------------
// Matching

// Sorted by (begin, end), no duplicates.
using MatchSet = std::vector<IndexInterval>;

inline bool duration_admits(std::size_t count, double period, double lo, double hi) {
  const double dur = static_cast<double>(count) * period;
  return lo <= dur && dur <= hi;
}

namespace detail {

// For each begin b in [0, n], the set of offsets o in [0, min(width-1, n-b)]
// such that [b, b+o) is in the relation. One bit row per begin.
class OffsetRelation {
public:
  OffsetRelation(std::size_t n, std::size_t width)
      : n_(n), width_(width), words_((width + 63) / 64), bits_((n + 1) * words_, 0) {}

  std::size_t n() const { return n_; }
  std::size_t width() const { return width_; }
  std::size_t words() const { return words_; }

  std::uint64_t* row(std::size_t b) { return bits_.data() + b * words_; }
  const std::uint64_t* row(std::size_t b) const { return bits_.data() + b * words_; }

  bool test(std::size_t b, std::size_t off) const { return (row(b)[off / 64] >> (off % 64)) & 1U; }
  void set(std::size_t b, std::size_t off) { row(b)[off / 64] |= std::uint64_t{1} << (off % 64); }

  // row(dst) |= row(src) << shift, dropping offsets >= width.
  void or_shifted(std::size_t dst, const OffsetRelation& src_rel, std::size_t src, std::size_t shift) {
    if (shift >= width_) return;
    std::uint64_t* d = row(dst);
    const std::uint64_t* s = src_rel.row(src);
    const std::size_t word_shift = shift / 64;
    const unsigned bit_shift = static_cast<unsigned>(shift % 64);
    for (std::size_t w = words_; w-- > word_shift;) {
      const std::size_t from = w - word_shift;
      std::uint64_t v = s[from] << bit_shift;
      if (bit_shift && from > 0) v |= s[from - 1] >> (64 - bit_shift);
      d[w] |= v;
    }
    const std::size_t tail = width_ % 64;
    if (tail) d[words_ - 1] &= (std::uint64_t{1} << tail) - 1;
  }

  template <typename F>
  void for_each_offset(std::size_t b, F&& f) const {
    const std::uint64_t* r = row(b);
    for (std::size_t w = 0; w < words_; ++w) {
      std::uint64_t v = r[w];
      while (v) {
        const int bit = std::countr_zero(v);
        f(w * 64 + static_cast<std::size_t>(bit));
        v &= v - 1;
      }
    }
  }

private:
  std::size_t n_, width_, words_;
  std::vector<std::uint64_t> bits_;
};

class BoundedMatcher {
public:
  BoundedMatcher(std::span<const double> values, double period, std::size_t max_len)
      : values_(values), period_(period), n_(values.size()), width_(std::min(max_len, values.size()) + 1) {}

  const OffsetRelation& eval(const Expr& e) {
    if (auto it = memo_.find(&e); it != memo_.end()) return it->second;
    OffsetRelation rel = compute(e);
    return memo_.emplace(&e, std::move(rel)).first->second;
  }

private:
  OffsetRelation compute(const Expr& e) {
    OffsetRelation r(n_, width_);
    if (const auto* t = e.as<Tube>()) {
      if (width_ > 1)
        for (std::size_t b = 0; b < n_; ++b)
          if (std::abs(values_[b] - t->center) <= t->delta) r.set(b, 1);
    } else if (e.as<Any>()) {
      if (width_ > 1)
        for (std::size_t b = 0; b < n_; ++b) r.set(b, 1);
    } else if (const auto* w = e.as<Within>()) {
      if (w->inner->as<Any>()) {
        for (std::size_t b = 0; b <= n_; ++b)
          for (std::size_t off = 0; off < width_ && b + off <= n_; ++off)
            if (duration_admits(off, period_, w->lo, w->hi)) r.set(b, off);
      } else {
        const OffsetRelation& x = eval(*w->inner);
        OffsetRelation mask(0, width_);
        for (std::size_t off = 0; off < width_; ++off)
          if (duration_admits(off, period_, w->lo, w->hi)) mask.set(0, off);
        for (std::size_t b = 0; b <= n_; ++b)
          for (std::size_t k = 0; k < r.words(); ++k) r.row(b)[k] = x.row(b)[k] & mask.row(0)[k];
      }
    } else if (const auto* u = e.as<Union>()) {
      const OffsetRelation& x = eval(*u->lhs);
      const OffsetRelation& y = eval(*u->rhs);
      for (std::size_t b = 0; b <= n_; ++b)
        for (std::size_t k = 0; k < r.words(); ++k) r.row(b)[k] = x.row(b)[k] | y.row(b)[k];
    } else if (const auto* c = e.as<Concat>()) {
      const OffsetRelation& x = eval(*c->lhs);
      const OffsetRelation& y = eval(*c->rhs);
      for (std::size_t b = 0; b <= n_; ++b)
        x.for_each_offset(b, [&](std::size_t off) { r.or_shifted(b, y, b + off, off); });
    } else if (const auto* p = e.as<Plus>()) {
      // x+ = x | x . x+, filled from the right so the tail rows are final.
      const OffsetRelation& x = eval(*p->inner);
      for (std::size_t b = n_ + 1; b-- > 0;) {
        for (std::size_t k = 0; k < r.words(); ++k) r.row(b)[k] = x.row(b)[k];
        x.for_each_offset(b, [&](std::size_t off) {
          if (off > 0) r.or_shifted(b, r, b + off, off);
        });
      }
    }
    return r;
  }

  std::span<const double> values_;
  double period_;
  std::size_t n_, width_;
  std::unordered_map<const Expr*, OffsetRelation> memo_;
};

inline MatchSet collect(const Expr& root, const OffsetRelation& rel) {
  const bool keep_empty = root.is_bounded_wildcard();
  MatchSet out;
  for (std::size_t b = 0; b <= rel.n(); ++b)
    rel.for_each_offset(b, [&](std::size_t off) {
      if (off > 0 || keep_empty) out.push_back({b, b + off});
    });
  return out;
}

}  // namespace detail

// All matches of length at most max_len samples.
inline MatchSet match_bounded(const Expr& expr, const SampledSignal& signal, std::size_t max_len) {
  detail::BoundedMatcher m(signal.values(), signal.period(), max_len);
  return detail::collect(expr, m.eval(expr));
}

inline MatchSet match_all(const Expr& expr, const SampledSignal& signal) {
  if (signal.empty()) throw std::invalid_argument("cannot match an empty signal");
  return match_bounded(expr, signal, signal.size());
}

// ---------------------------------------------------------------------------
// Reference matcher: decides each interval separately by recursive descent.
// Slow; used as a test oracle.

inline constexpr std::size_t kBruteForceLimit = 500;

namespace detail {

class BruteForce {
public:
  BruteForce(std::span<const double> values, double period) : values_(values), period_(period), n_(values.size()) {}

  bool member(const Expr& e, std::size_t b, std::size_t end) {
    auto& table = table_for(e);
    std::int8_t& cell = table[b * (n_ + 1) + end];
    if (cell < 0) cell = decide(e, b, end) ? 1 : 0;
    return cell == 1;
  }

private:
  std::vector<std::int8_t>& table_for(const Expr& e) {
    auto it = tables_.find(&e);
    if (it == tables_.end()) it = tables_.emplace(&e, std::vector<std::int8_t>((n_ + 1) * (n_ + 1), -1)).first;
    return it->second;
  }

  bool decide(const Expr& e, std::size_t b, std::size_t end) {
    const std::size_t len = end - b;
    if (const auto* t = e.as<Tube>()) return len == 1 && std::abs(values_[b] - t->center) <= t->delta;
    if (e.as<Any>()) return len == 1;
    if (const auto* w = e.as<Within>()) {
      const double dur = static_cast<double>(len) * period_;
      if (!(w->lo <= dur && dur <= w->hi)) return false;
      return w->inner->as<Any>() != nullptr || member(*w->inner, b, end);
    }
    if (const auto* u = e.as<Union>()) return member(*u->lhs, b, end) || member(*u->rhs, b, end);
    if (const auto* c = e.as<Concat>()) {
      for (std::size_t m = b; m <= end; ++m)
        if (member(*c->lhs, b, m) && member(*c->rhs, m, end)) return true;
      return false;
    }
    if (const auto* p = e.as<Plus>()) {
      if (member(*p->inner, b, end)) return true;
      for (std::size_t m = b + 1; m < end; ++m)
        if (member(*p->inner, b, m) && member(e, m, end)) return true;
      return false;
    }
    return false;
  }

  std::span<const double> values_;
  double period_;
  std::size_t n_;
  std::unordered_map<const Expr*, std::vector<std::int8_t>> tables_;
};

}  // namespace detail

inline MatchSet brute_force_match(const Expr& expr, const SampledSignal& signal) {
  if (signal.size() > kBruteForceLimit)
    throw std::invalid_argument("signal too long for brute-force matcher (" + std::to_string(signal.size()) + " > " +
                                std::to_string(kBruteForceLimit) + ")");
  detail::BruteForce bf(signal.values(), signal.period());
  const bool keep_empty = expr.is_bounded_wildcard();
  MatchSet out;
  const std::size_t n = signal.size();
  for (std::size_t b = 0; b <= n; ++b)
    for (std::size_t e = b; e <= n; ++e) {
      if (e == b && !keep_empty) continue;
      if (bf.member(expr, b, e)) out.push_back({b, e});
    }
  return out;
}

}  // namespace dstls::etre
