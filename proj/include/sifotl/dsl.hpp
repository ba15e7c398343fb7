#ifndef SIFOTL_DSL_HPP
#define SIFOTL_DSL_HPP

// Row-local, total expression language used for engineered features, noise
// rule scopes and benchmark predicates.
//
//   expr  := or
//   or    := and ('or' and)*
//   and   := not ('and' not)*
//   not   := 'not' not | cmp
//   cmp   := sum [ ('=='|'!='|'<'|'<='|'>'|'>=') sum | ['not'] 'in' '{' lit (',' lit)* '}' ]
//   sum   := prod (('+'|'-') prod)*
//   prod  := unary ('*' unary)*
//   unary := '-' unary | atom
//   atom  := number | string | 'true' | 'false' | column
//          | 'if' expr 'then' expr 'else' expr
//          | safe_div(e, e) | clamp(e, lo, hi) | log1p(e) | '(' expr ')'
//
// Missing inputs propagate to a missing result. safe_div returns 0 on a zero
// denominator; log1p of a value <= -1 is missing.

#include <sifotl/detail/numfmt.hpp>
#include <sifotl/errors.hpp>
#include <sifotl/table.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sifotl::dsl {

class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class TypeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

enum class Type { number, boolean, string };

inline std::string_view to_string(Type t) {
    switch (t) {
    case Type::number: return "number";
    case Type::boolean: return "boolean";
    case Type::string: return "string";
    }
    return "?";
}

inline Type type_of(DType d) {
    switch (d) {
    case DType::numeric: return Type::number;
    case DType::boolean: return Type::boolean;
    case DType::categorical:
    case DType::text: return Type::string;
    }
    return Type::number;
}

/// Column name -> dtype visible to an expression.
using ColumnTypes = std::map<std::string, DType, std::less<>>;

namespace detail {

enum class Tok { number, string, ident, op, end };

struct Token {
    Tok kind;
    std::string text;
    double number = 0.0;
    std::size_t pos = 0;
};

inline std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            while (i < src.size() && (std::isdigit(static_cast<unsigned char>(src[i])) || src[i] == '.' || src[i] == '_')) ++i;
            if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
                ++i;
                if (i < src.size() && (src[i] == '+' || src[i] == '-')) ++i;
                while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            }
            std::string digits;
            for (char d : src.substr(start, i - start))
                if (d != '_') digits.push_back(d);
            auto v = sifotl::detail::parse_double(digits);
            if (!v) throw ParseError("bad number '" + std::string(src.substr(start, i - start)) + "' at " + std::to_string(start));
            out.push_back({Tok::number, digits, *v, start});
        } else if (c == '\'' || c == '"') {
            ++i;
            std::string s;
            while (i < src.size() && src[i] != c) {
                if (src[i] == '\\' && i + 1 < src.size()) ++i;
                s.push_back(src[i++]);
            }
            if (i >= src.size()) throw ParseError("unterminated string at " + std::to_string(start));
            ++i;
            out.push_back({Tok::string, std::move(s), 0.0, start});
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
            out.push_back({Tok::ident, std::string(src.substr(start, i - start)), 0.0, start});
        } else {
            static constexpr std::string_view two[] = {"==", "!=", "<=", ">="};
            std::string op;
            for (auto t : two)
                if (src.substr(i, 2) == t) op = std::string(t);
            if (op.empty()) {
                if (std::string_view("+-*(),{}<>").find(c) == std::string_view::npos)
                    throw ParseError(std::string("unexpected character '") + c + "' at " + std::to_string(i));
                op = std::string(1, c);
            }
            i += op.size();
            out.push_back({Tok::op, op, 0.0, start});
        }
    }
    out.push_back({Tok::end, "", 0.0, src.size()});
    return out;
}

enum class Op {
    number, string, boolean, column,
    neg, add, sub, mul,
    lt, le, gt, ge, eq, ne, in, not_in,
    land, lor, lnot,
    cond, safe_div, clamp, log1p
};

struct Node {
    Op op;
    Type type = Type::number;
    double number = 0.0;
    std::string text; // string literal or column name
    std::size_t slot = 0;
    std::vector<std::string> str_set;
    std::vector<double> num_set;
    std::vector<std::unique_ptr<Node>> kids;
};

using NodePtr = std::unique_ptr<Node>;

class Parser {
public:
    Parser(std::string_view src, const ColumnTypes& columns) : toks_(lex(src)), columns_(columns) {}

    NodePtr parse_all(std::vector<std::string>& referenced) {
        auto e = parse_or();
        if (peek().kind != Tok::end) throw ParseError("unexpected '" + peek().text + "' at " + std::to_string(peek().pos));
        referenced = std::move(refs_);
        return e;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    bool is_keyword(std::string_view kw) const { return peek().kind == Tok::ident && peek().text == kw; }
    bool is_op(std::string_view op) const { return peek().kind == Tok::op && peek().text == op; }
    Token take() { return toks_[pos_++]; }

    void expect_op(std::string_view op) {
        if (!is_op(op)) throw ParseError("expected '" + std::string(op) + "' at " + std::to_string(peek().pos) + ", found '" + peek().text + "'");
        ++pos_;
    }
    void expect_keyword(std::string_view kw) {
        if (!is_keyword(kw)) throw ParseError("expected '" + std::string(kw) + "' at " + std::to_string(peek().pos));
        ++pos_;
    }

    static NodePtr make(Op op, Type t) {
        auto n = std::make_unique<Node>();
        n->op = op;
        n->type = t;
        return n;
    }

    static void require(const Node& n, Type t, std::string_view what) {
        if (n.type != t)
            throw TypeError(std::string(what) + " expects " + std::string(to_string(t)) + ", got " + std::string(to_string(n.type)));
    }

    NodePtr binary(Op op, Type t, NodePtr a, NodePtr b) {
        auto n = make(op, t);
        n->kids.push_back(std::move(a));
        n->kids.push_back(std::move(b));
        return n;
    }

    NodePtr parse_or() {
        auto lhs = parse_and();
        while (is_keyword("or")) {
            ++pos_;
            auto rhs = parse_and();
            require(*lhs, Type::boolean, "'or'");
            require(*rhs, Type::boolean, "'or'");
            lhs = binary(Op::lor, Type::boolean, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    NodePtr parse_and() {
        auto lhs = parse_not();
        while (is_keyword("and")) {
            ++pos_;
            auto rhs = parse_not();
            require(*lhs, Type::boolean, "'and'");
            require(*rhs, Type::boolean, "'and'");
            lhs = binary(Op::land, Type::boolean, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    NodePtr parse_not() {
        if (is_keyword("not")) {
            ++pos_;
            auto inner = parse_not();
            require(*inner, Type::boolean, "'not'");
            auto n = make(Op::lnot, Type::boolean);
            n->kids.push_back(std::move(inner));
            return n;
        }
        return parse_cmp();
    }

    NodePtr parse_cmp() {
        auto lhs = parse_sum();
        static const std::pair<std::string_view, Op> rel[] = {{"<", Op::lt}, {"<=", Op::le}, {">", Op::gt}, {">=", Op::ge}};
        for (auto [text, op] : rel) {
            if (is_op(text)) {
                ++pos_;
                auto rhs = parse_sum();
                require(*lhs, Type::number, "'" + std::string(text) + "'");
                require(*rhs, Type::number, "'" + std::string(text) + "'");
                return binary(op, Type::boolean, std::move(lhs), std::move(rhs));
            }
        }
        if (is_op("==") || is_op("!=")) {
            const Op op = take().text == "==" ? Op::eq : Op::ne;
            auto rhs = parse_sum();
            if (lhs->type != rhs->type)
                throw TypeError("cannot compare " + std::string(to_string(lhs->type)) + " with " + std::string(to_string(rhs->type)));
            return binary(op, Type::boolean, std::move(lhs), std::move(rhs));
        }
        bool negated = false;
        if (is_keyword("not") && pos_ + 1 < toks_.size() && toks_[pos_ + 1].kind == Tok::ident && toks_[pos_ + 1].text == "in") {
            negated = true;
            ++pos_;
        }
        if (is_keyword("in")) {
            ++pos_;
            expect_op("{");
            auto n = make(negated ? Op::not_in : Op::in, Type::boolean);
            if (lhs->type == Type::boolean) throw TypeError("'in' is not defined for boolean operands");
            do {
                const Token t = take();
                if (lhs->type == Type::string && t.kind == Tok::string) n->str_set.push_back(t.text);
                else if (lhs->type == Type::number && t.kind == Tok::number) n->num_set.push_back(t.number);
                else if (lhs->type == Type::number && t.kind == Tok::op && t.text == "-" && peek().kind == Tok::number) n->num_set.push_back(-take().number);
                else throw TypeError("'in' set literal does not match operand type " + std::string(to_string(lhs->type)));
            } while (is_op(",") && (++pos_, true));
            expect_op("}");
            n->kids.push_back(std::move(lhs));
            return n;
        }
        if (negated) throw ParseError("expected 'in' after 'not'");
        return lhs;
    }

    NodePtr parse_sum() {
        auto lhs = parse_prod();
        while (is_op("+") || is_op("-")) {
            const Op op = take().text == "+" ? Op::add : Op::sub;
            auto rhs = parse_prod();
            require(*lhs, Type::number, "arithmetic");
            require(*rhs, Type::number, "arithmetic");
            lhs = binary(op, Type::number, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    NodePtr parse_prod() {
        auto lhs = parse_unary();
        while (is_op("*")) {
            ++pos_;
            auto rhs = parse_unary();
            require(*lhs, Type::number, "arithmetic");
            require(*rhs, Type::number, "arithmetic");
            lhs = binary(Op::mul, Type::number, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    NodePtr parse_unary() {
        if (is_op("-")) {
            ++pos_;
            auto inner = parse_unary();
            require(*inner, Type::number, "unary '-'");
            auto n = make(Op::neg, Type::number);
            n->kids.push_back(std::move(inner));
            return n;
        }
        return parse_atom();
    }

    NodePtr parse_call(const std::string& name) {
        struct Sig {
            Op op;
            std::size_t arity;
        };
        static const std::map<std::string, Sig, std::less<>> fns = {
            {"safe_div", {Op::safe_div, 2}}, {"clamp", {Op::clamp, 3}}, {"log1p", {Op::log1p, 1}}};
        auto it = fns.find(name);
        if (it == fns.end()) throw ParseError("unknown function '" + name + "'");
        expect_op("(");
        auto n = make(it->second.op, Type::number);
        if (!is_op(")")) {
            do {
                auto arg = parse_or();
                require(*arg, Type::number, name + "()");
                n->kids.push_back(std::move(arg));
            } while (is_op(",") && (++pos_, true));
        }
        expect_op(")");
        if (n->kids.size() != it->second.arity)
            throw TypeError(name + "() takes " + std::to_string(it->second.arity) + " argument(s)");
        return n;
    }

    NodePtr parse_atom() {
        const Token& t = peek();
        if (t.kind == Tok::number) {
            auto n = make(Op::number, Type::number);
            n->number = take().number;
            return n;
        }
        if (t.kind == Tok::string) {
            auto n = make(Op::string, Type::string);
            n->text = take().text;
            return n;
        }
        if (t.kind == Tok::op && t.text == "(") {
            ++pos_;
            auto e = parse_or();
            expect_op(")");
            return e;
        }
        if (t.kind == Tok::ident) {
            if (t.text == "true" || t.text == "false") {
                auto n = make(Op::boolean, Type::boolean);
                n->number = take().text == "true" ? 1.0 : 0.0;
                return n;
            }
            if (t.text == "if") {
                ++pos_;
                auto c = parse_or();
                require(*c, Type::boolean, "'if' condition");
                expect_keyword("then");
                auto a = parse_or();
                expect_keyword("else");
                auto b = parse_or();
                Type result = a->type;
                if (a->type != b->type) {
                    const bool numeric_mix = (a->type == Type::number || a->type == Type::boolean) &&
                                             (b->type == Type::number || b->type == Type::boolean);
                    if (!numeric_mix) throw TypeError("'if' branches have incompatible types");
                    result = Type::number;
                }
                auto n = make(Op::cond, result);
                n->kids.push_back(std::move(c));
                n->kids.push_back(std::move(a));
                n->kids.push_back(std::move(b));
                return n;
            }
            static const std::set<std::string, std::less<>> reserved = {"and", "or", "not", "in", "then", "else"};
            if (reserved.contains(t.text)) throw ParseError("unexpected keyword '" + t.text + "' at " + std::to_string(t.pos));
            std::string name = take().text;
            if (is_op("(")) return parse_call(name);
            auto col = columns_.find(name);
            if (col == columns_.end()) throw TypeError("unknown or forbidden column '" + name + "'");
            auto n = make(Op::column, type_of(col->second));
            auto ref = std::find(refs_.begin(), refs_.end(), name);
            n->slot = static_cast<std::size_t>(ref - refs_.begin());
            if (ref == refs_.end()) refs_.push_back(name);
            n->text = std::move(name);
            return n;
        }
        throw ParseError("unexpected '" + t.text + "' at " + std::to_string(t.pos));
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    const ColumnTypes& columns_;
    std::vector<std::string> refs_;
};

struct Value {
    enum Kind { missing, number, boolean, string } kind = missing;
    double num = 0.0;
    std::string_view str;

    static Value make_missing() { return {}; }
    static Value of(double v) { return {number, v, {}}; }
    static Value of_bool(bool v) { return {boolean, v ? 1.0 : 0.0, {}}; }
    static Value of_str(std::string_view s) { return {string, 0.0, s}; }
};

} // namespace detail

/// A parsed, type-checked expression. Copies share the immutable tree.
class Expression {
public:
    Expression() = default;

    static Expression compile(std::string_view text, const ColumnTypes& columns) {
        Expression e;
        detail::Parser parser(text, columns);
        e.root_ = std::shared_ptr<const detail::Node>(parser.parse_all(e.columns_).release());
        e.text_ = std::string(text);
        return e;
    }

    /// Compile and require a boolean result.
    static Expression compile_predicate(std::string_view text, const ColumnTypes& columns) {
        auto e = compile(text, columns);
        if (e.type() != Type::boolean) throw TypeError("predicate '" + std::string(text) + "' is not boolean");
        return e;
    }

    bool valid() const { return root_ != nullptr; }
    Type type() const { return root_->type; }
    const std::string& text() const { return text_; }
    /// Referenced columns in first-use order.
    const std::vector<std::string>& columns() const { return columns_; }

    /// Evaluator bound to one table's column layout.
    class Bound {
    public:
        Bound(const Expression& e, const Table& table) : root_(e.root_.get()), table_(&table) {
            for (const auto& name : e.columns_) {
                const auto c = table.column_index(name);
                if (type_of(table.schema()[c].dtype) != find_type(*root_, name).value_or(Type::number))
                    throw TypeError("column '" + name + "' has a different dtype in this table");
                slots_.push_back(c);
            }
        }

        /// Numeric view: booleans become 0/1, missing stays nullopt.
        std::optional<double> number(std::size_t row) const {
            const auto v = eval(*root_, row);
            if (v.kind == detail::Value::number || v.kind == detail::Value::boolean) return v.num;
            return std::nullopt;
        }

        /// Predicate view: missing is false.
        bool truthy(std::size_t row) const {
            const auto v = eval(*root_, row);
            return v.kind == detail::Value::boolean && v.num != 0.0;
        }

    private:
        static std::optional<Type> find_type(const detail::Node& n, const std::string& name) {
            if (n.op == detail::Op::column && n.text == name) return n.type;
            for (const auto& k : n.kids)
                if (auto t = find_type(*k, name)) return t;
            return std::nullopt;
        }

        detail::Value eval(const detail::Node& n, std::size_t row) const {
            using detail::Op;
            using detail::Value;
            switch (n.op) {
            case Op::number: return Value::of(n.number);
            case Op::string: return Value::of_str(n.text);
            case Op::boolean: return Value::of_bool(n.number != 0.0);
            case Op::column: {
                const auto c = slots_[n.slot];
                if (table_->is_missing(c, row)) return Value::make_missing();
                if (n.type == Type::string) return Value::of_str(table_->label(c, row));
                if (n.type == Type::boolean) return Value::of_bool(table_->number(c, row) != 0.0);
                return Value::of(table_->number(c, row));
            }
            default: break;
            }

            if (n.op == Op::cond) {
                const auto c = eval(*n.kids[0], row);
                if (c.kind == Value::missing) return c;
                auto v = eval(*n.kids[c.num != 0.0 ? 1 : 2], row);
                if (n.type == Type::number && v.kind == Value::boolean) v.kind = Value::number;
                return v;
            }

            std::array<Value, 3> args{};
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                args[i] = eval(*n.kids[i], row);
                if (args[i].kind == Value::missing) return Value::make_missing();
            }
            const auto& a = args[0];
            switch (n.op) {
            case Op::neg: return Value::of(-a.num);
            case Op::add: return Value::of(a.num + args[1].num);
            case Op::sub: return Value::of(a.num - args[1].num);
            case Op::mul: return Value::of(a.num * args[1].num);
            case Op::lt: return Value::of_bool(a.num < args[1].num);
            case Op::le: return Value::of_bool(a.num <= args[1].num);
            case Op::gt: return Value::of_bool(a.num > args[1].num);
            case Op::ge: return Value::of_bool(a.num >= args[1].num);
            case Op::eq:
            case Op::ne: {
                const bool same = a.kind == Value::string ? a.str == args[1].str : a.num == args[1].num;
                return Value::of_bool(n.op == Op::eq ? same : !same);
            }
            case Op::in:
            case Op::not_in: {
                bool found = false;
                if (a.kind == Value::string) found = std::find(n.str_set.begin(), n.str_set.end(), a.str) != n.str_set.end();
                else found = std::find(n.num_set.begin(), n.num_set.end(), a.num) != n.num_set.end();
                return Value::of_bool(n.op == Op::in ? found : !found);
            }
            case Op::land: return Value::of_bool(a.num != 0.0 && args[1].num != 0.0);
            case Op::lor: return Value::of_bool(a.num != 0.0 || args[1].num != 0.0);
            case Op::lnot: return Value::of_bool(a.num == 0.0);
            case Op::safe_div: return Value::of(args[1].num == 0.0 ? 0.0 : a.num / args[1].num);
            case Op::clamp: {
                const double lo = std::min(args[1].num, args[2].num);
                const double hi = std::max(args[1].num, args[2].num);
                return Value::of(std::clamp(a.num, lo, hi));
            }
            case Op::log1p:
                if (a.num <= -1.0) return Value::make_missing();
                return Value::of(std::log1p(a.num));
            default: break;
            }
            return Value::make_missing();
        }

        const detail::Node* root_;
        const Table* table_;
        std::vector<std::size_t> slots_;
    };

    Bound bind(const Table& table) const {
        if (!root_) throw ValidationError("dsl: binding an empty expression");
        return Bound(*this, table);
    }

private:
    std::shared_ptr<const detail::Node> root_;
    std::string text_;
    std::vector<std::string> columns_;
};

/// Column types of every column in `schema` except the excluded roles.
inline ColumnTypes column_types(std::span<const ColumnSchema> schema, std::initializer_list<Role> excluded = {}) {
    ColumnTypes out;
    for (const auto& c : schema)
        if (std::find(excluded.begin(), excluded.end(), c.role) == excluded.end()) out.emplace(c.name, c.dtype);
    return out;
}

} // namespace sifotl::dsl

#endif // SIFOTL_DSL_HPP
