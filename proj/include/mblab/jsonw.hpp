#pragma once

// Minimal deterministic JSON emitter. Report files are written with a fixed
// key order and doubles formatted with 17 significant digits, so identical
// runs produce byte-identical artifacts.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace mblab::jsonw {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e308" : "-1e308";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

/// Streaming writer with explicit structure calls; keys are emitted in the
/// order given by the caller.
class Writer {
 public:
  void begin_object() { separate(); out_ += '{'; stack_.push_back(true); }
  void end_object() { out_ += '}'; stack_.pop_back(); }
  void begin_array() { separate(); out_ += '['; stack_.push_back(true); }
  void end_array() { out_ += ']'; stack_.pop_back(); }

  void key(const std::string& k) {
    separate();
    out_ += '"';
    out_ += escape(k);
    out_ += "\":";
    pending_value_ = true;
  }

  void value(double v) { separate(); out_ += fmt_double(v); }
  void value(long v) { separate(); out_ += std::to_string(v); }
  void value(int v) { separate(); out_ += std::to_string(v); }
  void value(bool v) { separate(); out_ += v ? "true" : "false"; }
  void value(const std::string& v) { separate(); out_ += '"'; out_ += escape(v); out_ += '"'; }
  void value(const char* v) { value(std::string(v)); }
  void null() { separate(); out_ += "null"; }

  void kv(const std::string& k, double v) { key(k); value(v); }
  void kv(const std::string& k, long v) { key(k); value(v); }
  void kv(const std::string& k, int v) { key(k); value(v); }
  void kv(const std::string& k, bool v) { key(k); value(v); }
  void kv(const std::string& k, const std::string& v) { key(k); value(v); }
  void kv(const std::string& k, const char* v) { key(k); value(v); }

  const std::string& str() const { return out_; }

 private:
  void separate() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!stack_.empty()) {
      char last = out_.empty() ? '\0' : out_.back();
      if (last != '{' && last != '[') out_ += ',';
    }
  }

  std::string out_;
  std::vector<bool> stack_;
  bool pending_value_ = false;
};

}  // namespace mblab::jsonw
