#include "reasonlab/grader.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numeric>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

std::string grade_kind_name(GradeKind kind) {
    switch (kind) {
        case GradeKind::ExactString: return "exact_string";
        case GradeKind::NumericTol: return "numeric_tol";
        case GradeKind::GameOf24: return "game_of_24";
        case GradeKind::JudgeEndpoint: return "judge_endpoint";
    }
    return "?";
}

GradeKind grade_kind_from_name(const std::string& name) {
    if (name == "exact_string") return GradeKind::ExactString;
    if (name == "numeric_tol") return GradeKind::NumericTol;
    if (name == "game_of_24") return GradeKind::GameOf24;
    if (name == "judge_endpoint") return GradeKind::JudgeEndpoint;
    throw ValidationError("unknown grade kind: " + name);
}

GradeSpec GradeSpec::from_json(const json& j) {
    GradeSpec spec;
    spec.kind = grade_kind_from_name(j.value("kind", "exact_string"));
    spec.numeric_tolerance = j.value("numeric_tolerance", 1e-6);
    if (j.contains("normalize")) {
        const json& n = j["normalize"];
        spec.case_fold = n.value("case_fold", true);
        spec.strip_whitespace = n.value("strip_whitespace", true);
        spec.strip_latex_wrappers = n.value("strip_latex_wrappers", false);
    }
    return spec;
}

json GradeSpec::to_json() const {
    return json{{"kind", grade_kind_name(kind)},
                {"numeric_tolerance", numeric_tolerance},
                {"normalize",
                 {{"case_fold", case_fold},
                  {"strip_whitespace", strip_whitespace},
                  {"strip_latex_wrappers", strip_latex_wrappers}}}};
}

namespace {

// Removes \boxed{...} (keeping the content), surrounding $ ... $, and
// \left / \right sizing commands.
std::string strip_latex(const std::string& text) {
    std::string s = util::trim(text);
    while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
        s = util::trim(s.substr(1, s.size() - 2));
    }
    std::size_t pos;
    while ((pos = s.find("\\boxed{")) != std::string::npos) {
        int depth = 1;
        std::size_t i = pos + 7;
        while (i < s.size() && depth > 0) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}') --depth;
            ++i;
        }
        if (depth != 0) break;  // unbalanced; leave as-is
        const std::string inner = s.substr(pos + 7, i - pos - 8);
        s = s.substr(0, pos) + inner + s.substr(i);
    }
    for (const char* cmd : {"\\left", "\\right"}) {
        std::size_t p;
        while ((p = s.find(cmd)) != std::string::npos) s.erase(p, std::strlen(cmd));
    }
    return util::trim(s);
}

std::optional<double> parse_number(const std::string& text) {
    const std::string t = util::trim(text);
    if (t.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) return std::nullopt;
    if (std::isnan(v)) return std::nullopt;
    return v;
}

// --- exact rational arithmetic ---------------------------------------------

using int128 = __int128;

int128 gcd128(int128 a, int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        const int128 r = a % b;
        a = b;
        b = r;
    }
    return a;
}

struct Rat {
    std::int64_t num = 0;
    std::int64_t den = 1;
    bool ok = true;

    static Rat fail() { return {0, 1, false}; }

    // Normalizes sign and reduces; fails on division by zero or int64
    // overflow after reduction.
    static Rat make(int128 n, int128 d) {
        if (d == 0) return fail();
        if (d < 0) { n = -n; d = -d; }
        const int128 g = gcd128(n, d);
        if (g > 1) { n /= g; d /= g; }
        constexpr int128 lo = INT64_MIN, hi = INT64_MAX;
        if (n < lo || n > hi || d > hi) return fail();
        return {static_cast<std::int64_t>(n), static_cast<std::int64_t>(d), true};
    }
};

Rat operator+(Rat a, Rat b) {
    if (!a.ok || !b.ok) return Rat::fail();
    return Rat::make(int128(a.num) * b.den + int128(b.num) * a.den,
                     int128(a.den) * b.den);
}
Rat operator-(Rat a, Rat b) {
    if (!a.ok || !b.ok) return Rat::fail();
    return Rat::make(int128(a.num) * b.den - int128(b.num) * a.den,
                     int128(a.den) * b.den);
}
Rat operator*(Rat a, Rat b) {
    if (!a.ok || !b.ok) return Rat::fail();
    return Rat::make(int128(a.num) * b.num, int128(a.den) * b.den);
}
Rat operator/(Rat a, Rat b) {
    if (!a.ok || !b.ok || b.num == 0) return Rat::fail();
    return Rat::make(int128(a.num) * b.den, int128(a.den) * b.num);
}

// Recursive-descent parser over digits, + - * / (ASCII or the common unicode
// variants), and parentheses. Leaf operands are collected in order.
class ExprParser {
public:
    ExprParser(const std::string& text, std::vector<std::int64_t>* leaves)
        : text_(normalize_ops(text)), leaves_(leaves) {}

    std::optional<Rat> parse() {
        pos_ = 0;
        Rat value = expr();
        skip_ws();
        if (!value.ok || pos_ != text_.size()) return std::nullopt;
        return value;
    }

private:
    static std::string normalize_ops(const std::string& in) {
        std::string out;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const unsigned char c = in[i];
            // UTF-8 for multiplication sign, division sign, en/em dash, minus.
            if (c == 0xC3 && i + 1 < in.size()) {
                const unsigned char d = in[i + 1];
                if (d == 0x97) { out.push_back('*'); ++i; continue; }
                if (d == 0xB7) { out.push_back('/'); ++i; continue; }
            }
            if (c == 0xE2 && i + 2 < in.size()) {
                const unsigned char d = in[i + 1], e = in[i + 2];
                if (d == 0x88 && e == 0x92) { out.push_back('-'); i += 2; continue; }
                if (d == 0x80 && (e == 0x93 || e == 0x94)) { out.push_back('-'); i += 2; continue; }
            }
            if (c == 'x' || c == 'X') { out.push_back('*'); continue; }
            out.push_back(static_cast<char>(c));
        }
        return out;
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) { ++pos_; return true; }
        return false;
    }

    Rat expr() {
        Rat value = term();
        for (;;) {
            if (eat('+')) value = value + term();
            else if (eat('-')) value = value - term();
            else return value;
        }
    }

    Rat term() {
        Rat value = factor();
        for (;;) {
            if (eat('*')) value = value * factor();
            else if (eat('/')) value = value / factor();
            else return value;
        }
    }

    Rat factor() {
        skip_ws();
        if (eat('(')) {
            Rat value = expr();
            if (!eat(')')) return Rat::fail();
            return value;
        }
        if (pos_ >= text_.size() ||
            !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            return Rat::fail();
        }
        std::int64_t n = 0;
        while (pos_ < text_.size() &&
               std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            n = n * 10 + (text_[pos_] - '0');
            if (n > 1'000'000) return Rat::fail();  // not a puzzle operand
            ++pos_;
        }
        if (leaves_) leaves_->push_back(n);
        return Rat::make(n, 1);
    }

    std::string text_;
    std::size_t pos_ = 0;
    std::vector<std::int64_t>* leaves_;
};

}  // namespace

std::optional<Rational> evaluate_arithmetic(const std::string& expression,
                                            std::vector<std::int64_t>* leaves) {
    ExprParser parser(expression, leaves);
    const auto value = parser.parse();
    if (!value) return std::nullopt;
    return Rational{value->num, value->den};
}

bool check_24(const std::string& expression, const std::vector<int>& numbers) {
    // The answer line sometimes arrives as "expr = 24"; evaluate the
    // left-hand side.
    std::string expr = expression;
    if (const std::size_t eq = expr.find('='); eq != std::string::npos) {
        expr = expr.substr(0, eq);
    }
    std::vector<std::int64_t> leaves;
    const auto value = evaluate_arithmetic(expr, &leaves);
    if (!value) return false;
    if (value->num != 24 || value->den != 1) return false;

    std::vector<std::int64_t> want(numbers.begin(), numbers.end());
    std::sort(want.begin(), want.end());
    std::sort(leaves.begin(), leaves.end());
    return leaves == want;
}

std::string normalize_answer(const std::string& text, const GradeSpec& spec) {
    std::string s = text;
    if (spec.strip_latex_wrappers) s = strip_latex(s);
    if (spec.strip_whitespace) {
        std::string out;
        for (char c : s) {
            if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
        }
        s = out;
    } else {
        s = util::trim(s);
    }
    if (spec.case_fold) s = util::to_lower(s);
    return s;
}

bool grade(const std::optional<std::string>& answer, const std::string& gold,
           const GradeSpec& spec, const json& instance_payload,
           const JudgeFn* judge) {
    if (!answer.has_value()) return false;
    switch (spec.kind) {
        case GradeKind::ExactString:
            return normalize_answer(*answer, spec) == normalize_answer(gold, spec);
        case GradeKind::NumericTol: {
            const auto a = parse_number(*answer);
            const auto g = parse_number(gold);
            if (!a || !g) return false;
            return std::abs(*a - *g) <=
                   spec.numeric_tolerance * std::max(1.0, std::abs(*g));
        }
        case GradeKind::GameOf24: {
            if (!instance_payload.contains("numbers")) return false;
            std::vector<int> numbers;
            for (const json& n : instance_payload["numbers"]) {
                numbers.push_back(n.get<int>());
            }
            return check_24(*answer, numbers);
        }
        case GradeKind::JudgeEndpoint: {
            if (judge == nullptr || !*judge) {
                throw GradeError("judge_endpoint grading requires a judge profile");
            }
            const std::string question =
                instance_payload.value("question", std::string{});
            return (*judge)(*answer, gold, question);
        }
    }
    return false;
}

}  // namespace reasonlab
