#include "hsbt/trace.hpp"

#include <algorithm>
#include <sstream>

#include "hsbt/error.hpp"

namespace hsbt {

AccessTrace::AccessTrace(const AccessTrace& other) {
  std::lock_guard lock(other.mu_);
  events_ = other.events_;
}

AccessTrace& AccessTrace::operator=(const AccessTrace& other) {
  if (this == &other) return *this;
  std::vector<TraceEvent> copy;
  {
    std::lock_guard lock(other.mu_);
    copy = other.events_;
  }
  std::lock_guard lock(mu_);
  events_ = std::move(copy);
  return *this;
}

void AccessTrace::record_fetch(std::uint32_t slot) {
  std::lock_guard lock(mu_);
  events_.push_back({TraceEventKind::NodeFetch, slot, {}});
}

void AccessTrace::record_page(std::uint32_t page) {
  std::lock_guard lock(mu_);
  events_.push_back({TraceEventKind::PageTouch, page, {}});
}

void AccessTrace::record_pointers(std::vector<TaggedPointer> pointers) {
  std::lock_guard lock(mu_);
  events_.push_back({TraceEventKind::PointerOut, 0, std::move(pointers)});
}

std::size_t AccessTrace::fetch_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [](const TraceEvent& e) {
    return e.kind == TraceEventKind::NodeFetch;
  }));
}

std::size_t AccessTrace::answer_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [](const TraceEvent& e) {
    return e.kind == TraceEventKind::PointerOut;
  }));
}

void AccessTrace::inject(std::size_t at, TraceEvent event) {
  std::lock_guard lock(mu_);
  at = std::min(at, events_.size());
  events_.insert(events_.begin() + static_cast<std::ptrdiff_t>(at), std::move(event));
}

std::string AccessTrace::to_text() const {
  std::lock_guard lock(mu_);
  std::ostringstream out;
  for (const TraceEvent& e : events_) {
    switch (e.kind) {
      case TraceEventKind::NodeFetch:
        out << "fetch " << e.location;
        break;
      case TraceEventKind::PageTouch:
        out << "page " << e.location;
        break;
      case TraceEventKind::PointerOut:
        out << "out";
        for (const TaggedPointer& p : e.pointers) out << ' ' << (p.to_value ? "v:" : "n:") << p.target;
        break;
    }
    out << '\n';
  }
  return out.str();
}

AccessTrace AccessTrace::from_text(const std::string& text) {
  AccessTrace trace;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "fetch" || word == "page") {
      std::uint64_t loc = 0;
      if (!(ls >> loc)) throw FormatError("trace line lacks location: " + line);
      trace.events_.push_back(
          {word == "fetch" ? TraceEventKind::NodeFetch : TraceEventKind::PageTouch, static_cast<std::uint32_t>(loc), {}});
    } else if (word == "out") {
      TraceEvent e{TraceEventKind::PointerOut, 0, {}};
      std::string item;
      while (ls >> item) {
        if (item.size() < 3 || item[1] != ':' || (item[0] != 'v' && item[0] != 'n')) {
          throw FormatError("bad pointer item: " + item);
        }
        e.pointers.push_back({item[0] == 'v', static_cast<std::uint32_t>(std::stoul(item.substr(2)))});
      }
      trace.events_.push_back(std::move(e));
    } else {
      throw FormatError("unknown trace event: " + line);
    }
  }
  return trace;
}

}  // namespace hsbt
