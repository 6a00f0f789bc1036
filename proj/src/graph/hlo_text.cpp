#include <charconv>
#include <cctype>
#include <sstream>

#include "fjc/graph/hlo.hpp"

namespace fjc::graph {

namespace {

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string int_list(const std::vector<T>& xs) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  os << ']';
  return os.str();
}

// Cursor over one source line with 1-based error locations.
class LineCursor {
 public:
  LineCursor(std::string_view text, int line) : text_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  std::size_t pos() const { return pos_; }
  bool accept(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c, const char* what) {
    if (!accept(c)) fail(std::string("expected '") + c + "' " + what);
  }
  std::string_view ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) fail("expected identifier");
    return text_.substr(start, pos_ - start);
  }
  std::int64_t integer() {
    skip_ws();
    std::int64_t v = 0;
    auto res = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (res.ec != std::errc()) fail("expected integer");
    pos_ = static_cast<std::size_t>(res.ptr - text_.data());
    return v;
  }
  std::string_view token() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    if (start == pos_) fail("expected value");
    return text_.substr(start, pos_ - start);
  }
  int node_ref() {
    if (!accept('%')) fail("expected node reference '%<id>'");
    return static_cast<int>(integer());
  }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(pos_, msg); }
  [[noreturn]] void fail_at(std::size_t pos, const std::string& msg) const {
    throw ParseError(line_, static_cast<int>(pos) + 1, msg);
  }

 private:
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

std::vector<std::int64_t> parse_int_list(LineCursor& cur) {
  std::vector<std::int64_t> out;
  cur.expect('[', "to open a list");
  if (cur.accept(']')) return out;
  do {
    out.push_back(cur.integer());
  } while (cur.accept(','));
  cur.expect(']', "to close a list");
  return out;
}

// Constant payloads are kept as tokens until the declared dtype is known.
std::vector<std::string> parse_value_tokens(LineCursor& cur) {
  std::vector<std::string> out;
  cur.expect('[', "to open a list");
  if (cur.accept(']')) return out;
  do {
    out.emplace_back(cur.token());
  } while (cur.accept(','));
  cur.expect(']', "to close a list");
  return out;
}

struct PendingRegion {
  std::vector<FusedMember> members;
  std::vector<std::vector<std::pair<bool, int>>> raw_operands;  // (external, $k or %id)
};

PendingRegion parse_region(LineCursor& cur) {
  PendingRegion region;
  cur.expect('[', "to open the fused region");
  if (cur.accept(']')) return region;
  do {
    FusedMember member;
    member.id = cur.node_ref();
    cur.expect('=', "after fused member id");
    const std::size_t kind_pos = cur.pos();
    auto kind = parse_op_kind(cur.ident());
    if (!kind) cur.fail_at(kind_pos, "unknown fused member kind");
    member.kind = *kind;
    std::vector<std::pair<bool, int>> raw;
    const std::size_t paren = cur.pos();
    cur.expect('(', "to open member operands");
    if (!cur.accept(')')) {
      do {
        if (cur.accept('$')) {
          raw.emplace_back(true, static_cast<int>(cur.integer()));
        } else {
          raw.emplace_back(false, cur.node_ref());
        }
      } while (cur.accept(','));
      if (!cur.accept(')')) cur.fail_at(paren, "unclosed '(' in fused member");
    }
    region.members.push_back(std::move(member));
    region.raw_operands.push_back(std::move(raw));
  } while (cur.accept(';'));
  cur.expect(']', "to close the fused region");
  return region;
}

template <typename T>
T convert_token(const std::string& tok, int line) {
  T v{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError(line, 1, "bad constant value '" + tok + "'");
  }
  return v;
}

struct ParsedLine {
  HloNode node;
  std::vector<std::string> values;
  PendingRegion region;
  bool has_region = false;
  int line = 0;
};

}  // namespace

HloGraph parse_hlo_text(std::string_view text) {
  std::vector<ParsedLine> parsed;
  std::vector<int> outputs;
  bool saw_outputs = false;

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    LineCursor cur(line, line_no);
    if (cur.at_end()) {
      if (end == text.size()) break;
      continue;
    }

    if (cur.peek() != '%') {
      const std::size_t kw_pos = cur.pos();
      if (cur.ident() != "outputs") cur.fail_at(kw_pos, "expected node definition or 'outputs:'");
      cur.expect(':', "after 'outputs'");
      if (saw_outputs) cur.fail_at(kw_pos, "duplicate outputs footer");
      saw_outputs = true;
      if (!cur.at_end()) {
        do {
          outputs.push_back(cur.node_ref());
        } while (cur.accept(','));
      }
      if (!cur.at_end()) cur.fail("trailing characters after outputs");
      if (end == text.size()) break;
      continue;
    }

    ParsedLine pl;
    pl.line = line_no;
    HloNode& node = pl.node;
    node.id = cur.node_ref();
    if (node.id < 0) cur.fail("node ids must be non-negative");
    cur.expect('=', "after node id");
    const std::size_t kind_pos = cur.pos();
    const std::string_view kind_name = cur.ident();
    auto kind = parse_op_kind(kind_name);
    if (!kind) cur.fail_at(kind_pos, "unknown op kind '" + std::string(kind_name) + "'");
    node.kind = *kind;

    if (cur.peek() == '(') {
      const std::size_t paren = cur.pos();
      cur.accept('(');
      if (!cur.accept(')')) {
        do {
          if (cur.at_end()) cur.fail_at(paren, "unclosed '('");
          node.operands.push_back(cur.node_ref());
        } while (cur.accept(','));
        if (!cur.accept(')')) cur.fail_at(paren, "unclosed '('");
      }
    }

    if (cur.peek() == '{') {
      const std::size_t brace = cur.pos();
      cur.accept('{');
      if (!cur.accept('}')) {
        do {
          const std::size_t key_pos = cur.pos();
          const std::string_view key = cur.ident();
          cur.expect('=', "after attribute name");
          Attrs& a = node.attrs;
          if (key == "value") {
            pl.values = parse_value_tokens(cur);
          } else if (key == "axis") {
            a.axis = cur.integer();
          } else if (key == "stride") {
            a.stride = cur.integer();
          } else if (key == "start") {
            a.start = cur.integer();
          } else if (key == "size") {
            a.size = cur.integer();
          } else if (key == "index") {
            a.param_index = cur.integer();
          } else if (key == "dims" || key == "perm") {
            a.dims = parse_int_list(cur);
          } else if (key == "op") {
            const std::size_t op_pos = cur.pos();
            const auto op = cur.ident();
            if (op == "sum") {
              a.reduce_op = ReduceOp::Sum;
            } else if (op == "max") {
              a.reduce_op = ReduceOp::Max;
            } else {
              cur.fail_at(op_pos, "reduce op must be sum or max");
            }
          } else if (key == "region") {
            pl.region = parse_region(cur);
            pl.has_region = true;
          } else {
            cur.fail_at(key_pos, "unknown attribute '" + std::string(key) + "'");
          }
        } while (cur.accept(','));
        if (!cur.accept('}')) cur.fail_at(brace, "unclosed '{'");
      }
    }

    cur.expect(':', "before the result type");
    const std::size_t type_pos = cur.pos();
    const std::string_view dtype = cur.ident();
    if (dtype == "f32") {
      node.type.dtype = DType::F32;
    } else if (dtype == "i32") {
      node.type.dtype = DType::I32;
    } else {
      cur.fail_at(type_pos, "unknown dtype '" + std::string(dtype) + "'");
    }
    node.type.shape = parse_int_list(cur);
    if (!cur.at_end()) cur.fail("trailing characters");
    parsed.push_back(std::move(pl));
    if (end == text.size()) break;
  }

  HloGraph graph;
  std::vector<std::pair<std::int64_t, int>> params;
  for (auto& pl : parsed) {
    HloNode& node = pl.node;
    if (graph.contains(node.id)) {
      throw ParseError(pl.line, 1, "duplicate node id %" + std::to_string(node.id));
    }
    Attrs& a = node.attrs;
    switch (node.kind) {
      case OpKind::Parameter:
        a.shape = node.type.shape;
        a.dtype = node.type.dtype;
        params.emplace_back(a.param_index < 0 ? static_cast<std::int64_t>(params.size()) + (1 << 30)
                                              : a.param_index,
                            node.id);
        break;
      case OpKind::Constant:
        a.shape = node.type.shape;
        a.dtype = node.type.dtype;
        for (const auto& tok : pl.values) {
          if (node.type.dtype == DType::I32) {
            a.i32_values.push_back(convert_token<std::int32_t>(tok, pl.line));
          } else {
            a.f32_values.push_back(convert_token<float>(tok, pl.line));
          }
        }
        break;
      case OpKind::Broadcast:
      case OpKind::Reshape:
        a.shape = node.type.shape;
        break;
      case OpKind::Fused: {
        if (!pl.has_region) throw ParseError(pl.line, 1, "fused node without region");
        auto region = std::make_shared<FusedRegion>();
        region->fused_type = node.type;
        std::map<int, int> position;
        for (std::size_t m = 0; m < pl.region.members.size(); ++m) {
          FusedMember member = pl.region.members[m];
          for (auto [external, idx] : pl.region.raw_operands[m]) {
            if (external) {
              member.operands.push_back(FusedOperand{true, idx});
            } else {
              auto it = position.find(idx);
              if (it == position.end()) {
                throw ParseError(pl.line, 1, "fused member refers to unknown %" + std::to_string(idx));
              }
              member.operands.push_back(FusedOperand{false, it->second});
            }
          }
          position[member.id] = static_cast<int>(m);
          region->members.push_back(std::move(member));
        }
        a.region = std::move(region);
        break;
      }
      default:
        break;
    }
    graph.insert(std::move(node));
  }
  std::sort(params.begin(), params.end());
  std::vector<int> param_ids;
  for (std::size_t i = 0; i < params.size(); ++i) {
    param_ids.push_back(params[i].second);
    graph.mutable_node(params[i].second).attrs.param_index = static_cast<std::int64_t>(i);
  }
  graph.set_parameters(std::move(param_ids));
  graph.set_outputs(std::move(outputs));
  validate_or_throw(graph);
  return graph;
}

std::string print_hlo_text(const HloGraph& graph) {
  std::ostringstream os;
  for (const auto& [id, node] : graph.nodes()) {
    os << '%' << id << " = " << to_string(node.kind);
    if (!node.operands.empty()) {
      os << '(';
      for (std::size_t i = 0; i < node.operands.size(); ++i) {
        os << (i ? ", " : "") << '%' << node.operands[i];
      }
      os << ')';
    }
    const Attrs& a = node.attrs;
    std::vector<std::string> attrs;
    switch (node.kind) {
      case OpKind::Parameter:
        attrs.push_back("index=" + std::to_string(a.param_index));
        break;
      case OpKind::Constant: {
        std::string v = "value=[";
        if (node.type.dtype == DType::F32) {
          for (std::size_t i = 0; i < a.f32_values.size(); ++i) {
            v += (i ? "," : "") + format_float(a.f32_values[i]);
          }
        } else {
          for (std::size_t i = 0; i < a.i32_values.size(); ++i) {
            v += (i ? "," : "") + std::to_string(a.i32_values[i]);
          }
        }
        attrs.push_back(v + "]");
        break;
      }
      case OpKind::Reduce:
        attrs.push_back(std::string("op=") + (a.reduce_op == ReduceOp::Sum ? "sum" : "max"));
        attrs.push_back("axis=" + std::to_string(a.axis));
        break;
      case OpKind::Conv2D:
        attrs.push_back("stride=" + std::to_string(a.stride));
        break;
      case OpKind::Concat:
        attrs.push_back("axis=" + std::to_string(a.axis));
        break;
      case OpKind::Slice:
        attrs.push_back("axis=" + std::to_string(a.axis));
        attrs.push_back("start=" + std::to_string(a.start));
        attrs.push_back("size=" + std::to_string(a.size));
        break;
      case OpKind::Broadcast:
        attrs.push_back("dims=" + int_list(a.dims));
        break;
      case OpKind::Transpose:
        attrs.push_back("perm=" + int_list(a.dims));
        break;
      case OpKind::Fused: {
        std::string r = "region=[";
        if (a.region) {
          const auto& members = a.region->members;
          for (std::size_t m = 0; m < members.size(); ++m) {
            const FusedMember& member = members[m];
            r += (m ? "; " : "") + std::string("%") + std::to_string(member.id) + "=" +
                 std::string(to_string(member.kind)) + "(";
            for (std::size_t k = 0; k < member.operands.size(); ++k) {
              const FusedOperand& op = member.operands[k];
              r += k ? "," : "";
              r += op.external ? "$" + std::to_string(op.index)
                               : "%" + std::to_string(members[static_cast<std::size_t>(op.index)].id);
            }
            r += ")";
          }
        }
        attrs.push_back(r + "]");
        break;
      }
      default:
        break;
    }
    if (!attrs.empty()) {
      os << " {";
      for (std::size_t i = 0; i < attrs.size(); ++i) os << (i ? ", " : "") << attrs[i];
      os << '}';
    }
    os << " : " << node.type.to_string() << '\n';
  }
  os << "outputs:";
  for (std::size_t i = 0; i < graph.outputs().size(); ++i) {
    os << (i ? ", %" : " %") << graph.outputs()[i];
  }
  os << '\n';
  return os.str();
}

bool isomorphic(const HloGraph& a, const HloGraph& b) {
  if (a.size() != b.size() || a.parameters().size() != b.parameters().size() ||
      a.outputs().size() != b.outputs().size()) {
    return false;
  }
  std::vector<int> ta, tb;
  try {
    ta = topo_order(a);
    tb = topo_order(b);
  } catch (const Error&) {
    return false;
  }
  std::map<int, int> ra, rb;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    ra[ta[i]] = static_cast<int>(i);
    rb[tb[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const HloNode& x = a.node(ta[i]);
    const HloNode& y = b.node(tb[i]);
    if (x.kind != y.kind || x.type != y.type || x.operands.size() != y.operands.size()) return false;
    for (std::size_t k = 0; k < x.operands.size(); ++k) {
      if (ra[x.operands[k]] != rb[y.operands[k]]) return false;
    }
    Attrs ax = x.attrs, ay = y.attrs;
    if (ax.region && ay.region) {
      // Member ids are local names; compare structure only.
      auto rx = *ax.region, ry = *ay.region;
      if (rx.members.size() != ry.members.size()) return false;
      for (std::size_t m = 0; m < rx.members.size(); ++m) {
        rx.members[m].id = ry.members[m].id = 0;
      }
      if (!(rx == ry)) return false;
      ax.region.reset();
      ay.region.reset();
    }
    if (!(ax == ay)) return false;
  }
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (ra[a.parameters()[i]] != rb[b.parameters()[i]]) return false;
  }
  for (std::size_t i = 0; i < a.outputs().size(); ++i) {
    if (ra[a.outputs()[i]] != rb[b.outputs()[i]]) return false;
  }
  return true;
}

}  // namespace fjc::graph
