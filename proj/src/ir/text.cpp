#include <charconv>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "fjc/ir/fj.hpp"

namespace fjc::ir {

namespace {

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

std::string format_operand(const FjFunction& fn, const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Reg:
      if (o.reg < 0 || static_cast<std::size_t>(o.reg) >= fn.regs.size()) return "%<invalid>";
      return "%" + fn.regs[static_cast<std::size_t>(o.reg)].name;
    case Operand::Kind::Int:
      return std::to_string(o.i);
    case Operand::Kind::Float:
      return format_float(o.f);
  }
  return "?";
}

class Printer {
 public:
  explicit Printer(const FjFunction& fn) : fn_(fn) {}

  std::string reg(int r) const { return format_operand(fn_, Operand::r(r)); }
  std::string op(const Operand& o) const { return format_operand(fn_, o); }

  void region(std::ostringstream& os, const Region& r, int depth) const {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      os << pad << "^bb" << b << ":\n";
      for (const Instr& in : r.blocks[b].instrs) instr(os, in, depth + 1);
    }
  }

  void instr(std::ostringstream& os, const Instr& in, int depth) const {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    os << pad;
    const std::string name(to_string(in.op));
    auto list = [&](std::size_t from) {
      for (std::size_t i = from; i < in.args.size(); ++i) os << (i > from ? ", " : "") << op(in.args[i]);
    };
    auto label = [](int t) { return "^bb" + std::to_string(t); };
    if (is_float_arith(in.op) || is_index_arith(in.op) || in.op == Op::IToF) {
      os << reg(in.dst) << " = " << name << " ";
      list(0);
    } else {
      switch (in.op) {
        case Op::Load:
          os << reg(in.dst) << " = load " << op(in.args.at(0)) << "[" << op(in.args.at(1)) << "]";
          break;
        case Op::Store:
          os << "store " << op(in.args.at(0)) << "[" << op(in.args.at(1)) << "], " << op(in.args.at(2));
          break;
        case Op::Alloc:
          os << reg(in.dst) << " = alloc : " << fn_.type_of(in.dst).to_string();
          break;
        case Op::ConstBuf:
          os << reg(in.dst) << " = constbuf [";
          for (std::size_t i = 0; i < in.payload.size(); ++i) os << (i ? ", " : "") << format_float(in.payload[i]);
          os << "] : " << fn_.type_of(in.dst).to_string();
          break;
        case Op::Call:
          os << "call @" << in.callee << "(";
          list(0);
          os << ")";
          break;
        case Op::Br:
          os << "br " << label(in.targets.at(0));
          break;
        case Op::CBr:
          os << "cbr " << op(in.args.at(0)) << ", " << label(in.targets.at(0)) << ", " << label(in.targets.at(1));
          break;
        case Op::Detach:
          os << "detach " << label(in.targets.at(0)) << ", " << label(in.targets.at(1));
          break;
        case Op::Reattach:
          os << "reattach " << label(in.targets.at(0));
          break;
        case Op::Ret:
        case Op::Yield:
        case Op::Sync:
          os << name;
          break;
        case Op::PFor:
        case Op::For:
          os << name << " " << reg(in.dst) << " in [" << op(in.args.at(0)) << ", " << op(in.args.at(1)) << ")";
          if (in.grain > 0) os << " grain " << in.grain;
          if (in.strip) os << " strip " << in.strip->grain << " of " << in.strip->trip;
          os << " {\n";
          region(os, in.region(), depth);
          os << pad << "}";
          break;
        default:
          os << name;
      }
    }
    os << "\n";
  }

  void signature(std::ostringstream& os) const {
    os << "@" << fn_.name << "(";
    for (std::size_t i = 0; i < fn_.params.size(); ++i) {
      const Param& p = fn_.params[i];
      os << (i ? ", " : "") << (p.out ? "out " : "") << reg(p.reg) << ": " << fn_.type_of(p.reg).to_string();
    }
    os << ")";
    if (fn_.inline_candidate) os << " inline";
    if (fn_.opaque) os << " opaque";
    if (fn_.cost) os << " cost=" << *fn_.cost;
  }

 private:
  const FjFunction& fn_;
};

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { Ident, Reg, Func, Label, Int, Float, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int col = 1;
};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  std::size_t line_start = 0;
  std::size_t i = 0;
  auto is_name = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  };
  auto fail = [&](std::size_t at, const std::string& msg) {
    throw ParseError(line, static_cast<int>(at - line_start) + 1, msg);
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      line_start = ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    Token t;
    t.line = line;
    t.col = static_cast<int>(i - line_start) + 1;
    const std::size_t start = i;
    if (c == '%' || c == '@' || c == '^') {
      ++i;
      while (i < src.size() && is_name(src[i])) ++i;
      if (i == start + 1) fail(start, std::string("expected name after '") + c + "'");
      t.kind = c == '%' ? Tok::Reg : c == '@' ? Tok::Func : Tok::Label;
      t.text = std::string(src.substr(start + 1, i - start - 1));
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               ((c == '-' || c == '+') && i + 1 < src.size() &&
                (std::isdigit(static_cast<unsigned char>(src[i + 1])) || src[i + 1] == 'i' || src[i + 1] == 'n'))) {
      ++i;
      bool is_float = false;
      while (i < src.size()) {
        const char d = src[i];
        if (std::isalnum(static_cast<unsigned char>(d)) || d == '.') {
          if (d == '.' || d == 'e' || d == 'E' || d == 'i' || d == 'n') is_float = true;
          ++i;
        } else if ((d == '-' || d == '+') && (src[i - 1] == 'e' || src[i - 1] == 'E')) {
          ++i;
        } else {
          break;
        }
      }
      t.kind = is_float ? Tok::Float : Tok::Int;
      t.text = std::string(src.substr(start, i - start));
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < src.size() && is_name(src[i])) ++i;
      t.text = std::string(src.substr(start, i - start));
      if (t.text == "buf" && i < src.size() && src[i] == '<') {
        while (i < src.size() && src[i] != '>' && src[i] != '\n') ++i;
        if (i >= src.size() || src[i] != '>') fail(start, "unterminated buffer type");
        ++i;
        t.text = std::string(src.substr(start, i - start));
      }
      t.kind = (t.text == "inf" || t.text == "nan") ? Tok::Float : Tok::Ident;
    } else if (std::string_view("()[]{},:=<>").find(c) != std::string_view::npos) {
      ++i;
      t.kind = Tok::Punct;
      t.text = std::string(1, c);
    } else {
      fail(start, std::string("unexpected character '") + c + "'");
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.col = static_cast<int>(i - line_start) + 1;
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------------------
// Parser

struct Fixup {
  std::size_t block;
  std::size_t instr;
  std::vector<std::pair<std::string, Token>> labels;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) {}

  FjModule module() {
    FjModule m;
    while (peek().kind != Tok::End) {
      const Token& t = peek();
      if (is_word("entry")) {
        next();
        m.entry = expect(Tok::Func, "function name").text;
      } else if (is_word("func") || is_word("declare")) {
        const bool declared = next().text == "declare";
        FjFunction fn = function(declared);
        if (m.contains(fn.name)) throw ParseError(t.line, t.col, "duplicate function @" + fn.name);
        m.add(std::move(fn));
      } else {
        fail(t, "expected 'entry', 'func' or 'declare'");
      }
    }
    return m;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_word(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }
  bool is_punct(char c) const { return peek().kind == Tok::Punct && peek().text[0] == c; }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw ParseError(t.line, t.col, msg + (t.kind == Tok::End ? " at end of input" : ", found '" + t.text + "'"));
  }
  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail(peek(), std::string("expected ") + what);
    return next();
  }
  void expect_punct(char c) {
    if (!is_punct(c)) fail(peek(), std::string("expected '") + c + "'");
    next();
  }
  void expect_word(const char* w) {
    if (!is_word(w)) fail(peek(), std::string("expected '") + w + "'");
    next();
  }
  std::int64_t integer() {
    const Token& t = expect(Tok::Int, "integer");
    std::int64_t v = 0;
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) fail(t, "bad integer");
    return v;
  }
  float number() {
    const Token& t = next();
    if (t.kind != Tok::Int && t.kind != Tok::Float) fail(t, "expected number");
    std::string s = t.text;
    if (!s.empty() && s[0] == '+') s.erase(0, 1);
    float v = 0.0f;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(t, "bad number");
    return v;
  }

  ValueType type() {
    const Token& t = expect(Tok::Ident, "type");
    if (t.text == "f32") return ValueType::f32();
    if (t.text == "i64") return ValueType::i64();
    if (t.text.rfind("buf<", 0) == 0 && t.text.size() > 8 && t.text.substr(t.text.size() - 4) == "f32>") {
      // buf<AxBx...xf32>
      std::vector<std::int64_t> shape;
      std::string_view body(t.text);
      body = body.substr(4, body.size() - 8);
      while (!body.empty()) {
        std::int64_t d = 0;
        auto res = std::from_chars(body.data(), body.data() + body.size(), d);
        if (res.ec != std::errc() || res.ptr == body.data() + body.size() || *res.ptr != 'x') {
          fail(t, "bad buffer type");
        }
        shape.push_back(d);
        body.remove_prefix(static_cast<std::size_t>(res.ptr - body.data()) + 1);
      }
      if (shape.empty()) fail(t, "buffer type needs at least one extent");
      return ValueType::buf(std::move(shape));
    }
    fail(t, "unknown type");
  }

  // Register lookup; types are fixed by the first definition.
  int reg_ref(const Token& t) {
    auto it = regs_.find(t.text);
    if (it != regs_.end()) return it->second;
    const int r = fn_->add_reg(t.text, ValueType::f32());
    regs_[t.text] = r;
    untyped_[r] = t;
    return r;
  }
  int reg_def(const Token& t, const ValueType& type) {
    const int r = reg_ref(t);
    auto u = untyped_.find(r);
    if (u != untyped_.end()) {
      fn_->regs[static_cast<std::size_t>(r)].type = type;
      untyped_.erase(u);
    } else if (fn_->type_of(r) != type) {
      fail(t, "register %" + t.text + " redefined with type " + type.to_string());
    }
    return r;
  }

  Operand operand(bool float_context) {
    const Token& t = peek();
    if (t.kind == Tok::Reg) {
      next();
      return Operand::r(reg_ref(t));
    }
    if (t.kind == Tok::Float) return Operand::immf(number());
    if (t.kind == Tok::Int) {
      if (float_context) return Operand::immf(number());
      return Operand::imm(integer());
    }
    fail(t, "expected operand");
  }

  FjFunction function(bool declared) {
    FjFunction fn;
    fn_ = &fn;
    regs_.clear();
    untyped_.clear();
    fn.declared = declared;
    fn.name = expect(Tok::Func, "function name").text;
    expect_punct('(');
    while (!is_punct(')')) {
      if (!fn.params.empty()) expect_punct(',');
      bool out = false;
      if (is_word("out")) {
        next();
        out = true;
      }
      const Token& name = expect(Tok::Reg, "parameter");
      if (regs_.count(name.text)) fail(name, "duplicate parameter");
      expect_punct(':');
      const int r = fn.add_reg(name.text, type());
      regs_[name.text] = r;
      fn.params.push_back(Param{r, out});
    }
    expect_punct(')');
    while (true) {
      if (is_word("inline")) {
        next();
        fn.inline_candidate = true;
      } else if (is_word("opaque")) {
        next();
        fn.opaque = true;
      } else if (is_word("cost")) {
        next();
        expect_punct('=');
        fn.cost = integer();
      } else {
        break;
      }
    }
    if (!declared) {
      const Token& open = peek();
      expect_punct('{');
      fn.body = region(open);
      expect_punct('}');
    }
    if (!untyped_.empty()) {
      const Token& t = untyped_.begin()->second;
      fail(t, "register %" + t.text + " is never defined");
    }
    fn_ = nullptr;
    return fn;
  }

  Region region(const Token& open) {
    Region r;
    std::map<std::string, std::size_t> labels;
    std::vector<Fixup> fixups;
    if (peek().kind != Tok::Label) fail(peek(), "expected block label");
    while (peek().kind == Tok::Label) {
      const Token& l = next();
      expect_punct(':');
      if (!labels.emplace(l.text, r.blocks.size()).second) fail(l, "duplicate label ^" + l.text);
      r.blocks.emplace_back();
      while (peek().kind != Tok::Label && !is_punct('}') && peek().kind != Tok::End) {
        Fixup fx{r.blocks.size() - 1, r.blocks.back().instrs.size(), {}};
        Instr in = instr(fx);
        r.blocks.back().instrs.push_back(std::move(in));
        if (!fx.labels.empty()) fixups.push_back(std::move(fx));
      }
    }
    if (!is_punct('}')) fail(open.kind == Tok::End ? peek() : open, "unclosed '{'");
    for (const Fixup& fx : fixups) {
      Instr& in = r.blocks[fx.block].instrs[fx.instr];
      for (const auto& [name, tok] : fx.labels) {
        auto it = labels.find(name);
        if (it == labels.end()) fail(tok, "undefined label ^" + name);
        in.targets.push_back(static_cast<int>(it->second));
      }
    }
    return r;
  }

  void label_ref(Fixup& fx) {
    const Token& t = expect(Tok::Label, "block label");
    fx.labels.emplace_back(t.text, t);
  }

  Instr instr(Fixup& fx) {
    Instr in;
    const Token& first = peek();
    if (first.kind == Tok::Reg) {
      const Token& dst = next();
      expect_punct('=');
      const Token& opname = expect(Tok::Ident, "instruction");
      auto op = parse_op(opname.text);
      if (!op) fail(opname, "unknown instruction");
      in.op = *op;
      if (is_float_arith(*op) || is_index_arith(*op)) {
        const bool f = is_float_arith(*op);
        in.dst = reg_def(dst, f ? ValueType::f32() : ValueType::i64());
        const int n = arith_arity(*op);
        for (int i = 0; i < n; ++i) {
          if (i) expect_punct(',');
          in.args.push_back(operand(f));
        }
      } else if (*op == Op::IToF) {
        in.dst = reg_def(dst, ValueType::f32());
        in.args.push_back(operand(false));
      } else if (*op == Op::Load) {
        in.dst = reg_def(dst, ValueType::f32());
        const Token& b = expect(Tok::Reg, "buffer");
        in.args.push_back(Operand::r(reg_ref(b)));
        expect_punct('[');
        in.args.push_back(operand(false));
        expect_punct(']');
      } else if (*op == Op::Alloc) {
        expect_punct(':');
        in.dst = reg_def(dst, type());
      } else if (*op == Op::ConstBuf) {
        expect_punct('[');
        while (!is_punct(']')) {
          if (!in.payload.empty()) expect_punct(',');
          in.payload.push_back(number());
        }
        expect_punct(']');
        expect_punct(':');
        in.dst = reg_def(dst, type());
      } else {
        fail(opname, "instruction does not define a value");
      }
      return in;
    }

    const Token& opname = expect(Tok::Ident, "instruction");
    auto op = parse_op(opname.text);
    if (!op) fail(opname, "unknown instruction");
    in.op = *op;
    switch (*op) {
      case Op::Store: {
        const Token& b = expect(Tok::Reg, "buffer");
        in.args.push_back(Operand::r(reg_ref(b)));
        expect_punct('[');
        in.args.push_back(operand(false));
        expect_punct(']');
        expect_punct(',');
        in.args.push_back(operand(true));
        break;
      }
      case Op::Call:
        in.callee = expect(Tok::Func, "callee").text;
        expect_punct('(');
        while (!is_punct(')')) {
          if (!in.args.empty()) expect_punct(',');
          in.args.push_back(operand(false));
        }
        expect_punct(')');
        break;
      case Op::Br:
        label_ref(fx);
        break;
      case Op::CBr:
        in.args.push_back(operand(false));
        expect_punct(',');
        label_ref(fx);
        expect_punct(',');
        label_ref(fx);
        break;
      case Op::Detach:
        label_ref(fx);
        expect_punct(',');
        label_ref(fx);
        break;
      case Op::Reattach:
        label_ref(fx);
        break;
      case Op::Ret:
      case Op::Yield:
      case Op::Sync:
        break;
      case Op::PFor:
      case Op::For: {
        const Token& iv = expect(Tok::Reg, "induction variable");
        in.dst = reg_def(iv, ValueType::i64());
        expect_word("in");
        expect_punct('[');
        in.args.push_back(operand(false));
        expect_punct(',');
        in.args.push_back(operand(false));
        expect_punct(')');
        if (is_word("grain")) {
          next();
          in.grain = integer();
        }
        if (is_word("strip")) {
          next();
          StripInfo s;
          s.grain = integer();
          expect_word("of");
          s.trip = integer();
          in.strip = s;
        }
        const Token& open = peek();
        expect_punct('{');
        in.body.push_back(region(open));
        expect_punct('}');
        break;
      }
      default:
        fail(opname, "instruction needs a result register");
    }
    return in;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  FjFunction* fn_ = nullptr;
  std::map<std::string, int> regs_;
  std::map<int, Token> untyped_;
};

void collect_order(const FjFunction& fn, const Region& r, std::vector<int>& order, std::vector<bool>& seen) {
  auto note = [&](int reg) {
    if (reg >= 0 && static_cast<std::size_t>(reg) < seen.size() && !seen[static_cast<std::size_t>(reg)]) {
      seen[static_cast<std::size_t>(reg)] = true;
      order.push_back(reg);
    }
  };
  for (const Block& b : r.blocks) {
    for (const Instr& in : b.instrs) {
      const bool dst_first = in.dst >= 0 && in.op != Op::Store;
      if (dst_first) note(in.dst);
      for (const Operand& o : in.args) {
        if (o.is_reg()) note(o.reg);
      }
      for (const Region& sub : in.body) collect_order(fn, sub, order, seen);
    }
  }
}

}  // namespace

std::string print_fj_function(const FjFunction& fn) {
  Printer p(fn);
  std::ostringstream os;
  os << (fn.declared ? "declare " : "func ");
  p.signature(os);
  if (fn.declared) {
    os << "\n";
    return os.str();
  }
  os << " {\n";
  p.region(os, fn.body, 0);
  os << "}\n";
  return os.str();
}

std::string print_fj_text(const FjModule& module) {
  std::ostringstream os;
  if (!module.entry.empty()) os << "entry @" << module.entry << "\n\n";
  bool first = true;
  for (const auto& [name, fn] : module.functions) {
    if (!first) os << "\n";
    first = false;
    os << print_fj_function(fn);
  }
  return os.str();
}

FjModule parse_fj_text_unverified(std::string_view text) { return Parser(text).module(); }

FjModule parse_fj_text(std::string_view text) {
  FjModule m = parse_fj_text_unverified(text);
  verify_or_throw(m);
  return m;
}

FjFunction canonicalize(const FjFunction& fn) {
  std::vector<int> order;
  std::vector<bool> seen(fn.regs.size(), false);
  for (const Param& p : fn.params) {
    if (!seen[static_cast<std::size_t>(p.reg)]) {
      seen[static_cast<std::size_t>(p.reg)] = true;
      order.push_back(p.reg);
    }
  }
  collect_order(fn, fn.body, order, seen);
  std::vector<int> remap(fn.regs.size(), -1);
  FjFunction out = fn;
  out.regs.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    out.regs.push_back(Register{std::to_string(i), fn.type_of(order[i])});
  }
  for (Param& p : out.params) p.reg = remap[static_cast<std::size_t>(p.reg)];
  for_each_instr(out.body, [&](Instr& in) {
    if (in.dst >= 0) in.dst = remap[static_cast<std::size_t>(in.dst)];
    for (Operand& o : in.args) {
      if (o.is_reg()) o.reg = remap[static_cast<std::size_t>(o.reg)];
    }
  });
  return out;
}

std::uint64_t structural_hash(const FjFunction& fn) {
  const std::string text = print_fj_function(canonicalize(fn));
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool isomorphic(const FjFunction& a, const FjFunction& b) {
  return print_fj_function(canonicalize(a)) == print_fj_function(canonicalize(b));
}

}  // namespace fjc::ir
