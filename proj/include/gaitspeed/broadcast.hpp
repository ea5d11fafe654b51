#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace gaitspeed {

using SharedMessage = std::shared_ptr<const std::string>;

/// A push-channel endpoint. Implementations buffer at most a fixed number
/// of undelivered messages.
class Subscriber {
 public:
  virtual ~Subscriber() = default;
  /// Must not block. Returns false when the subscriber cannot take the
  /// message (queue full or connection gone).
  virtual bool offer(SharedMessage message) = 0;
  virtual void close(std::string_view reason) = 0;
};

/// FIFO with a hard bound, shared by subscriber implementations.
class MessageQueue {
 public:
  explicit MessageQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(SharedMessage m) {
    std::lock_guard lk(m_);
    if (q_.size() >= capacity_) return false;
    q_.push_back(std::move(m));
    return true;
  }
  std::optional<SharedMessage> pop() {
    std::lock_guard lk(m_);
    if (q_.empty()) return std::nullopt;
    auto m = std::move(q_.front());
    q_.pop_front();
    return m;
  }
  std::size_t size() const {
    std::lock_guard lk(m_);
    return q_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex m_;
  std::deque<SharedMessage> q_;
  std::size_t capacity_;
};

/// Fans result messages out to subscribers. A subscriber that refuses a
/// message is closed and removed; the caller is never blocked by it.
class Broadcaster {
 public:
  using Id = std::uint64_t;

  Id subscribe(std::shared_ptr<Subscriber> s);
  void unsubscribe(Id id);

  /// Returns the number of subscribers that accepted the message.
  std::size_t broadcast(std::string message);

  std::size_t subscriber_count() const;
  std::uint64_t dropped_subscribers() const { return dropped_.load(); }

 private:
  mutable std::mutex m_;
  std::map<Id, std::shared_ptr<Subscriber>> subs_;
  Id next_id_ = 1;
  std::atomic<std::uint64_t> dropped_{0};
};

}  // namespace gaitspeed
