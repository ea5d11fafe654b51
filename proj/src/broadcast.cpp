#include "gaitspeed/broadcast.hpp"

#include <vector>

#include <spdlog/spdlog.h>

namespace gaitspeed {

Broadcaster::Id Broadcaster::subscribe(std::shared_ptr<Subscriber> s) {
  std::lock_guard lk(m_);
  Id id = next_id_++;
  subs_.emplace(id, std::move(s));
  return id;
}

void Broadcaster::unsubscribe(Id id) {
  std::lock_guard lk(m_);
  subs_.erase(id);
}

std::size_t Broadcaster::broadcast(std::string message) {
  auto shared = std::make_shared<const std::string>(std::move(message));
  std::vector<std::shared_ptr<Subscriber>> refused;
  std::size_t delivered = 0;
  {
    // Held across offers so concurrent broadcasts reach every queue in the
    // same order.
    std::lock_guard lk(m_);
    for (auto it = subs_.begin(); it != subs_.end();) {
      if (it->second->offer(shared)) {
        ++delivered;
        ++it;
      } else {
        refused.push_back(std::move(it->second));
        it = subs_.erase(it);
      }
    }
  }
  for (auto& s : refused) {
    ++dropped_;
    spdlog::warn("dropping push subscriber: queue full or closed");
    s->close("subscriber too slow");
  }
  return delivered;
}

std::size_t Broadcaster::subscriber_count() const {
  std::lock_guard lk(m_);
  return subs_.size();
}

}  // namespace gaitspeed
