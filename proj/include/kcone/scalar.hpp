#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kcone {

/// Arbitrary-precision rational, the exact scalar mode.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};

/// Exact complex scalar: a plain pair over the real representation.
/// (std::complex is only specified for builtin floating types.)
template <class R>
struct Complex {
    R re{};
    R im{};

    Complex() = default;
    Complex(R r) : re(std::move(r)) {}
    Complex(R r, R i) : re(std::move(r)), im(std::move(i)) {}

    friend Complex operator+(const Complex& a, const Complex& b) { return {a.re + b.re, a.im + b.im}; }
    friend Complex operator-(const Complex& a, const Complex& b) { return {a.re - b.re, a.im - b.im}; }
    friend Complex operator-(const Complex& a) { return {-a.re, -a.im}; }
    friend Complex operator*(const Complex& a, const Complex& b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    friend Complex operator/(const Complex& a, const Complex& b) {
        R d = b.re * b.re + b.im * b.im;
        if (d == 0) throw Error("complex division by zero");
        return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
    }
    Complex& operator+=(const Complex& b) { return *this = *this + b; }
    Complex& operator-=(const Complex& b) { return *this = *this - b; }
    Complex& operator*=(const Complex& b) { return *this = *this * b; }
    Complex& operator/=(const Complex& b) { return *this = *this / b; }
    friend bool operator==(const Complex& a, const Complex& b) { return a.re == b.re && a.im == b.im; }
    friend bool operator!=(const Complex& a, const Complex& b) { return !(a == b); }
};

using ComplexRational = Complex<Rational>;

inline double to_double(const Rational& x) { return x.template convert_to<double>(); }
inline double to_double(double x) { return x; }

/// Per-scalar-type facts used throughout: exactness, complexness, magnitude.
template <class S>
struct scalar_traits;

template <>
struct scalar_traits<Rational> {
    static constexpr bool is_exact = true;
    static constexpr bool is_complex = false;
    using real_type = Rational;
    using float_type = double;
    static double magnitude(const Rational& x) { return std::abs(to_double(x)); }
    static bool is_zero(const Rational& x) { return x == 0; }
    static Rational conj(const Rational& x) { return x; }
    static double to_float(const Rational& x) { return to_double(x); }
};

template <>
struct scalar_traits<double> {
    static constexpr bool is_exact = false;
    static constexpr bool is_complex = false;
    using real_type = double;
    using float_type = double;
    static double magnitude(double x) { return std::abs(x); }
    static bool is_zero(double x) { return x == 0.0; }
    static double conj(double x) { return x; }
    static double to_float(double x) { return x; }
};

template <>
struct scalar_traits<ComplexRational> {
    static constexpr bool is_exact = true;
    static constexpr bool is_complex = true;
    using real_type = Rational;
    using float_type = std::complex<double>;
    static double magnitude(const ComplexRational& x) {
        return std::hypot(to_double(x.re), to_double(x.im));
    }
    static bool is_zero(const ComplexRational& x) { return x.re == 0 && x.im == 0; }
    static ComplexRational conj(const ComplexRational& x) { return {x.re, -x.im}; }
    static std::complex<double> to_float(const ComplexRational& x) {
        return {to_double(x.re), to_double(x.im)};
    }
};

template <>
struct scalar_traits<std::complex<double>> {
    static constexpr bool is_exact = false;
    static constexpr bool is_complex = true;
    using real_type = double;
    using float_type = std::complex<double>;
    static double magnitude(const std::complex<double>& x) { return std::abs(x); }
    static bool is_zero(const std::complex<double>& x) { return x == std::complex<double>{}; }
    static std::complex<double> conj(const std::complex<double>& x) { return std::conj(x); }
    static std::complex<double> to_float(const std::complex<double>& x) { return x; }
};

template <class S>
using float_of = typename scalar_traits<S>::float_type;

template <class S>
float_of<S> to_float_scalar(const S& x) {
    return scalar_traits<S>::to_float(x);
}

namespace detail {
/// cpp_int reads a leading 0 as octal; keep plain decimal semantics.
inline BigInt parse_bigint(std::string d) {
    bool neg = false;
    if (!d.empty() && (d[0] == '+' || d[0] == '-')) {
        neg = d[0] == '-';
        d = d.substr(1);
    }
    if (d.empty() || d.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError("not an integer literal: '" + d + "'");
    std::size_t i = 0;
    while (i + 1 < d.size() && d[i] == '0') ++i;
    BigInt v(d.substr(i));
    return neg ? BigInt(-v) : v;
}
}  // namespace detail

/// Parse "p/q", integer, or decimal ("-0.25" -> -1/4) text exactly.
inline Rational parse_rational(const std::string& text) {
    auto bad = [&] { throw ParseError("not a rational literal: '" + text + "'"); };
    std::string s = text;
    if (s.empty()) bad();
    if (auto slash = s.find('/'); slash != std::string::npos) {
        std::string num = s.substr(0, slash), den = s.substr(slash + 1);
        if (num.empty() || den.empty()) bad();
        BigInt p = detail::parse_bigint(num);
        BigInt q = detail::parse_bigint(den);
        if (q == 0) throw ParseError("zero denominator in '" + text + "'");
        return Rational(p, q);
    }
    auto strip_zeros = [](std::string d) {
        std::size_t i = 0;
        while (i + 1 < d.size() && d[i] == '0') ++i;
        return d.substr(i);
    };
    bool neg = false;
    std::size_t pos = 0;
    if (s[pos] == '+' || s[pos] == '-') {
        neg = s[pos] == '-';
        ++pos;
    }
    std::string digits;
    int frac_digits = 0;
    bool seen_dot = false, seen_digit = false;
    std::string exp_part;
    for (; pos < s.size(); ++pos) {
        char c = s[pos];
        if (c == '.') {
            if (seen_dot) bad();
            seen_dot = true;
        } else if (c == 'e' || c == 'E') {
            exp_part = s.substr(pos + 1);
            break;
        } else if (c >= '0' && c <= '9') {
            digits += c;
            seen_digit = true;
            if (seen_dot) ++frac_digits;
        } else {
            bad();
        }
    }
    if (!seen_digit) bad();
    BigInt p(strip_zeros(digits.empty() ? "0" : digits));
    if (neg) p = -p;
    BigInt q = 1;
    for (int i = 0; i < frac_digits; ++i) q *= 10;
    Rational r(p, q);
    if (!exp_part.empty()) {
        long e = 0;
        try {
            e = std::stol(exp_part);
        } catch (const std::exception&) {
            bad();
        }
        BigInt ten = 1;
        for (long i = 0; i < std::labs(e); ++i) ten *= 10;
        if (e >= 0)
            r *= Rational(ten);
        else
            r /= Rational(ten);
    }
    return r;
}

inline std::string to_string(const Rational& x) {
    BigInt num = boost::multiprecision::numerator(x);
    BigInt den = boost::multiprecision::denominator(x);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

}  // namespace kcone
