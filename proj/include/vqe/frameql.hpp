#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqe::frameql {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

enum class AggKind { None, FCount, Count, CountDistinct };

struct SelectList {
    AggKind agg = AggKind::None;
    std::string distinct_column;       // COUNT(DISTINCT col)
    std::vector<std::string> columns;  // projections; "*" allowed

    bool is_aggregate() const { return agg != AggKind::None; }
    friend bool operator==(const SelectList&, const SelectList&) = default;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// WHERE expression tree: boolean OR/AND over comparisons; comparison
// operands are column refs, UDF calls, string or number literals.
struct Expr {
    enum class Kind { Column, StringLit, NumberLit, Call, Compare, And, Or };
    Kind kind;
    std::string name;          // column ref or UDF name
    std::string str;           // string literal
    double number = 0;         // number literal
    std::string op;            // comparison operator
    std::vector<ExprPtr> children;  // call args / compare lhs,rhs / and-or operands
};

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (!a || !b) return !a && !b;
    if (a->kind != b->kind || a->name != b->name || a->str != b->str ||
        a->number != b->number || a->op != b->op ||
        a->children.size() != b->children.size())
        return false;
    for (std::size_t i = 0; i < a->children.size(); ++i)
        if (!expr_equal(a->children[i], b->children[i])) return false;
    return true;
}

// Flattening constructor for AND/OR: nested same-kind children are spliced
// so every boolean chain has one canonical n-ary shape.
inline ExprPtr make_connective(Expr::Kind kind, std::vector<ExprPtr> operands) {
    if (operands.size() == 1) return operands[0];
    auto node = std::make_shared<Expr>();
    node->kind = kind;
    for (auto& op : operands) {
        if (op->kind == kind)
            node->children.insert(node->children.end(), op->children.begin(),
                                  op->children.end());
        else
            node->children.push_back(op);
    }
    return node;
}

enum class GroupBy { None, Timestamp, TrackId };

// HAVING conjunct: SUM(class='X') op N  or  COUNT(*) op N.
struct HavingTerm {
    enum class Kind { SumClassEq, CountStar };
    Kind kind = Kind::CountStar;
    std::string class_name;  // SumClassEq only
    std::string op;
    double value = 0;
    friend bool operator==(const HavingTerm&, const HavingTerm&) = default;
};

struct Query {
    SelectList select_list;
    std::string source;
    ExprPtr where;  // null when absent
    GroupBy group_by = GroupBy::None;
    std::vector<HavingTerm> having;
    std::optional<std::int64_t> limit;
    std::optional<std::int64_t> gap;
    std::optional<double> error_bound;
    std::optional<double> confidence;
    std::optional<double> fpr_bound;
    std::optional<double> fnr_bound;

    friend bool operator==(const Query& a, const Query& b) {
        return a.select_list == b.select_list && a.source == b.source &&
               expr_equal(a.where, b.where) && a.group_by == b.group_by &&
               a.having == b.having && a.limit == b.limit && a.gap == b.gap &&
               a.error_bound == b.error_bound && a.confidence == b.confidence &&
               a.fpr_bound == b.fpr_bound && a.fnr_bound == b.fnr_bound;
    }
};

inline const std::set<std::string>& default_udfs() {
    static const std::set<std::string> udfs{"redness", "area",  "classify",
                                            "xmin",    "xmax",  "ymin",
                                            "ymax"};
    return udfs;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error {
    int line, column;
    ParseError(int line_, int col_, const std::string& msg)
        : std::runtime_error(format(line_, col_, msg)), line(line_), column(col_) {}

    static std::string format(int line, int col, const std::string& msg) {
        std::ostringstream os;
        os << line << ":" << col << ": " << msg;
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
    enum class Kind { Ident, Number, String, Symbol, Percent, End };
    Kind kind = Kind::End;
    std::string text;     // raw (identifiers keep original case)
    std::string upper;    // uppercased for keyword checks
    double number = 0;
    int line = 1, column = 1;
};

inline std::string to_upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) {}

    Token next() {
        skip_ws();
        Token tok;
        tok.line = line_;
        tok.column = col_;
        if (pos_ >= src_.size()) {
            tok.kind = Token::Kind::End;
            return tok;
        }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string s;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                s += advance();
            tok.kind = Token::Kind::Ident;
            tok.text = s;
            tok.upper = to_upper(s);
            return tok;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            std::string s;
            while (pos_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                    src_[pos_] == 'e' || src_[pos_] == 'E' ||
                    ((src_[pos_] == '+' || src_[pos_] == '-') && !s.empty() &&
                     (s.back() == 'e' || s.back() == 'E'))))
                s += advance();
            double v;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw ParseError(tok.line, tok.column, "malformed number '" + s + "'");
            tok.kind = Token::Kind::Number;
            tok.text = s;
            tok.number = v;
            return tok;
        }
        if (c == '\'') {
            advance();
            std::string s;
            while (pos_ < src_.size() && src_[pos_] != '\'') s += advance();
            if (pos_ >= src_.size())
                throw ParseError(tok.line, tok.column, "unterminated string literal");
            advance();
            tok.kind = Token::Kind::String;
            tok.text = s;
            return tok;
        }
        if (c == '%') {
            advance();
            tok.kind = Token::Kind::Percent;
            tok.text = "%";
            return tok;
        }
        // multi-char operators
        for (const char* op : {"<=", ">=", "!=", "<>"}) {
            if (src_.compare(pos_, 2, op) == 0) {
                advance();
                advance();
                tok.kind = Token::Kind::Symbol;
                tok.text = op;
                return tok;
            }
        }
        if (std::string("(),*=<>").find(c) != std::string::npos) {
            advance();
            tok.kind = Token::Kind::Symbol;
            tok.text = std::string(1, c);
            return tok;
        }
        throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
    }

  private:
    char advance() {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    void skip_ws() {
        while (pos_ < src_.size() &&
               std::isspace(static_cast<unsigned char>(src_[pos_])))
            advance();
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

class Parser {
  public:
    explicit Parser(const std::string& src,
                    const std::set<std::string>& udfs = default_udfs())
        : lexer_(src), udfs_(udfs) {
        advance();
    }

    Query parse_query() {
        Query q;
        expect_keyword("SELECT");
        q.select_list = parse_select_list();
        expect_keyword("FROM");
        q.source = expect_ident("trace name");

        if (accept_keyword("WHERE")) q.where = parse_or();
        if (accept_keyword("GROUP")) {
            expect_keyword("BY");
            std::string col = expect_ident("GROUP BY column");
            if (col == "timestamp")
                q.group_by = GroupBy::Timestamp;
            else if (col == "trackid")
                q.group_by = GroupBy::TrackId;
            else
                fail("GROUP BY supports only 'timestamp' or 'trackid'");
        }
        if (accept_keyword("HAVING")) {
            q.having.push_back(parse_having_term());
            while (accept_keyword("AND")) q.having.push_back(parse_having_term());
        }

        // trailing clauses, any order
        for (;;) {
            if (accept_keyword("ERROR")) {
                expect_keyword("WITHIN");
                q.error_bound = expect_number("error bound");
                if (*q.error_bound <= 0) fail("error bound must be positive");
            } else if (accept_keyword("FPR")) {
                expect_keyword("WITHIN");
                q.fpr_bound = expect_number("FPR bound");
                if (*q.fpr_bound < 0 || *q.fpr_bound > 1) fail("FPR bound must be in [0,1]");
            } else if (accept_keyword("FNR")) {
                expect_keyword("WITHIN");
                q.fnr_bound = expect_number("FNR bound");
                if (*q.fnr_bound < 0 || *q.fnr_bound > 1) fail("FNR bound must be in [0,1]");
            } else if (accept_keyword("AT") || check_keyword("CONFIDENCE")) {
                expect_keyword("CONFIDENCE");
                double v = expect_number("confidence");
                if (accept_percent()) v /= 100.0;
                if (v <= 0 || v >= 1) fail("confidence must be in (0,1)");
                q.confidence = v;
            } else if (accept_keyword("LIMIT")) {
                double v = expect_number("LIMIT");
                if (v < 1 || v != std::floor(v)) fail("LIMIT must be a positive integer");
                q.limit = static_cast<std::int64_t>(v);
                if (accept_keyword("GAP")) {
                    double g = expect_number("GAP");
                    if (g < 0 || g != std::floor(g)) fail("GAP must be a non-negative integer");
                    q.gap = static_cast<std::int64_t>(g);
                }
            } else {
                break;
            }
        }
        if (tok_.kind != detail::Token::Kind::End) fail("unexpected trailing input");

        validate(q);
        return q;
    }

  private:
    SelectList parse_select_list() {
        SelectList sl;
        if (check_keyword("FCOUNT") || check_keyword("COUNT")) {
            bool fcount = check_keyword("FCOUNT");
            advance();
            expect_symbol("(");
            if (accept_keyword("DISTINCT")) {
                if (fcount) fail("FCOUNT does not support DISTINCT");
                sl.agg = AggKind::CountDistinct;
                sl.distinct_column = expect_ident("DISTINCT column");
            } else {
                expect_symbol("*");
                sl.agg = fcount ? AggKind::FCount : AggKind::Count;
            }
            expect_symbol(")");
            return sl;
        }
        for (;;) {
            if (accept_symbol("*"))
                sl.columns.push_back("*");
            else
                sl.columns.push_back(expect_ident("column name"));
            if (!accept_symbol(",")) break;
        }
        return sl;
    }

    // AND/OR chains are kept flat (n-ary) so the AST has one canonical shape.
    ExprPtr parse_or() {
        std::vector<ExprPtr> operands{parse_and()};
        while (accept_keyword("OR")) operands.push_back(parse_and());
        return make_connective(Expr::Kind::Or, std::move(operands));
    }

    ExprPtr parse_and() {
        std::vector<ExprPtr> operands{parse_primary()};
        while (accept_keyword("AND")) operands.push_back(parse_primary());
        return make_connective(Expr::Kind::And, std::move(operands));
    }

    ExprPtr parse_primary() {
        if (accept_symbol("(")) {
            ExprPtr e = parse_or();
            expect_symbol(")");
            return e;
        }
        ExprPtr lhs = parse_operand();
        std::string op = expect_comparison_op();
        ExprPtr rhs = parse_operand();
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Compare;
        node->op = op == "<>" ? "!=" : op;
        node->children = {lhs, rhs};
        return node;
    }

    ExprPtr parse_operand() {
        auto node = std::make_shared<Expr>();
        if (tok_.kind == detail::Token::Kind::Number) {
            node->kind = Expr::Kind::NumberLit;
            node->number = tok_.number;
            advance();
            return node;
        }
        if (tok_.kind == detail::Token::Kind::String) {
            node->kind = Expr::Kind::StringLit;
            node->str = tok_.text;
            advance();
            return node;
        }
        std::string name = expect_ident("column or UDF");
        if (accept_symbol("(")) {
            node->kind = Expr::Kind::Call;
            node->name = name;
            if (!check_symbol(")")) {
                for (;;) {
                    node->children.push_back(parse_operand());
                    if (!accept_symbol(",")) break;
                }
            }
            expect_symbol(")");
            return node;
        }
        node->kind = Expr::Kind::Column;
        node->name = name;
        return node;
    }

    HavingTerm parse_having_term() {
        HavingTerm term;
        if (accept_keyword("SUM")) {
            expect_symbol("(");
            std::string col = expect_ident("class column");
            if (col != "class") fail("HAVING SUM supports only class equality");
            expect_symbol("=");
            if (tok_.kind != detail::Token::Kind::String) fail("expected string literal");
            term.kind = HavingTerm::Kind::SumClassEq;
            term.class_name = tok_.text;
            advance();
            expect_symbol(")");
        } else if (accept_keyword("COUNT")) {
            expect_symbol("(");
            expect_symbol("*");
            expect_symbol(")");
            term.kind = HavingTerm::Kind::CountStar;
        } else {
            fail("expected SUM or COUNT in HAVING");
        }
        term.op = expect_comparison_op();
        term.value = expect_number("HAVING comparison value");
        return term;
    }

    void validate(Query& q) {
        if (q.gap && !q.limit) fail("GAP requires LIMIT");
        if (q.error_bound && !q.select_list.is_aggregate())
            fail("ERROR WITHIN requires an aggregate select list");
        if (q.confidence && !q.error_bound)
            fail("CONFIDENCE requires ERROR WITHIN");
        if (q.error_bound && !q.confidence) q.confidence = 0.95;
        validate_udfs(q.where);
    }

    void validate_udfs(const ExprPtr& e) {
        if (!e) return;
        if (e->kind == Expr::Kind::Call && !udfs_.count(e->name))
            fail("unknown UDF '" + e->name + "'");
        for (const auto& c : e->children) validate_udfs(c);
    }

    // token plumbing
    void advance() { tok_ = lexer_.next(); }
    bool check_keyword(const std::string& kw) const {
        return tok_.kind == detail::Token::Kind::Ident && tok_.upper == kw;
    }
    bool accept_keyword(const std::string& kw) {
        if (!check_keyword(kw)) return false;
        advance();
        return true;
    }
    void expect_keyword(const std::string& kw) {
        if (!accept_keyword(kw)) fail("expected keyword " + kw);
    }
    bool check_symbol(const std::string& s) const {
        return tok_.kind == detail::Token::Kind::Symbol && tok_.text == s;
    }
    bool accept_symbol(const std::string& s) {
        if (!check_symbol(s)) return false;
        advance();
        return true;
    }
    void expect_symbol(const std::string& s) {
        if (!accept_symbol(s)) fail("expected '" + s + "'");
    }
    bool accept_percent() {
        if (tok_.kind != detail::Token::Kind::Percent) return false;
        advance();
        return true;
    }
    std::string expect_ident(const std::string& what) {
        if (tok_.kind != detail::Token::Kind::Ident) fail("expected " + what);
        std::string s = tok_.text;
        advance();
        return s;
    }
    double expect_number(const std::string& what) {
        if (tok_.kind != detail::Token::Kind::Number) fail("expected " + what);
        double v = tok_.number;
        advance();
        return v;
    }
    std::string expect_comparison_op() {
        static const std::set<std::string> ops{"=", "!=", "<>", "<", "<=", ">", ">="};
        if (tok_.kind != detail::Token::Kind::Symbol || !ops.count(tok_.text))
            fail("expected comparison operator");
        std::string op = tok_.text;
        advance();
        return op;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(tok_.line, tok_.column, msg);
    }

    detail::Lexer lexer_;
    detail::Token tok_;
    std::set<std::string> udfs_;
};

inline Query parse(const std::string& text,
                   const std::set<std::string>& udfs = default_udfs()) {
    return Parser(text, udfs).parse_query();
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

namespace detail {

inline std::string print_number(double v) {
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
        return std::string(buf, res.ptr);
    }
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void print_expr(std::ostringstream& os, const ExprPtr& e, bool parenthesize_or) {
    switch (e->kind) {
        case Expr::Kind::Column:
            os << e->name;
            break;
        case Expr::Kind::StringLit:
            os << '\'' << e->str << '\'';
            break;
        case Expr::Kind::NumberLit:
            os << print_number(e->number);
            break;
        case Expr::Kind::Call:
            os << e->name << '(';
            for (std::size_t i = 0; i < e->children.size(); ++i) {
                if (i) os << ", ";
                print_expr(os, e->children[i], false);
            }
            os << ')';
            break;
        case Expr::Kind::Compare:
            print_expr(os, e->children[0], false);
            os << ' ' << e->op << ' ';
            print_expr(os, e->children[1], false);
            break;
        case Expr::Kind::And:
            for (std::size_t i = 0; i < e->children.size(); ++i) {
                if (i) os << " AND ";
                bool paren = e->children[i]->kind == Expr::Kind::Or;
                if (paren) os << '(';
                print_expr(os, e->children[i], false);
                if (paren) os << ')';
            }
            break;
        case Expr::Kind::Or:
            if (parenthesize_or) os << '(';
            for (std::size_t i = 0; i < e->children.size(); ++i) {
                if (i) os << " OR ";
                print_expr(os, e->children[i], true);
            }
            if (parenthesize_or) os << ')';
            break;
    }
}

}  // namespace detail

inline std::string print(const Query& q) {
    std::ostringstream os;
    os << "SELECT ";
    switch (q.select_list.agg) {
        case AggKind::FCount:
            os << "FCOUNT(*)";
            break;
        case AggKind::Count:
            os << "COUNT(*)";
            break;
        case AggKind::CountDistinct:
            os << "COUNT(DISTINCT " << q.select_list.distinct_column << ")";
            break;
        case AggKind::None:
            for (std::size_t i = 0; i < q.select_list.columns.size(); ++i) {
                if (i) os << ", ";
                os << q.select_list.columns[i];
            }
            break;
    }
    os << "\nFROM " << q.source;
    if (q.where) {
        os << "\nWHERE ";
        detail::print_expr(os, q.where, false);
    }
    if (q.group_by != GroupBy::None)
        os << "\nGROUP BY " << (q.group_by == GroupBy::Timestamp ? "timestamp" : "trackid");
    if (!q.having.empty()) {
        os << "\nHAVING ";
        for (std::size_t i = 0; i < q.having.size(); ++i) {
            if (i) os << " AND ";
            const HavingTerm& h = q.having[i];
            if (h.kind == HavingTerm::Kind::SumClassEq)
                os << "SUM(class='" << h.class_name << "')";
            else
                os << "COUNT(*)";
            os << " " << h.op << " " << detail::print_number(h.value);
        }
    }
    if (q.error_bound) os << "\nERROR WITHIN " << detail::print_number(*q.error_bound);
    if (q.confidence) os << "\nAT CONFIDENCE " << detail::print_number(*q.confidence);
    if (q.fpr_bound) os << "\nFPR WITHIN " << detail::print_number(*q.fpr_bound);
    if (q.fnr_bound) os << "\nFNR WITHIN " << detail::print_number(*q.fnr_bound);
    if (q.limit) {
        os << "\nLIMIT " << *q.limit;
        if (q.gap) os << " GAP " << *q.gap;
    }
    return os.str();
}

}  // namespace vqe::frameql
