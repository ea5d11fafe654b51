#include <doctest.h>

#include <vector>

#include "gaitspeed/broadcast.hpp"

using namespace gaitspeed;

namespace {

struct FakeSubscriber : Subscriber {
  explicit FakeSubscriber(std::size_t capacity) : queue(capacity) {}
  bool offer(SharedMessage m) override { return !closed && queue.push(std::move(m)); }
  void close(std::string_view r) override {
    closed = true;
    reason = r;
  }
  std::vector<std::string> drain() {
    std::vector<std::string> out;
    while (auto m = queue.pop()) out.push_back(**m);
    return out;
  }
  MessageQueue queue;
  bool closed = false;
  std::string reason;
};

}  // namespace

TEST_CASE("delivered count") {
  Broadcaster b;
  CHECK(b.broadcast("x") == 0);
  std::vector<std::shared_ptr<FakeSubscriber>> subs;
  for (int i = 0; i < 3; ++i) {
    subs.push_back(std::make_shared<FakeSubscriber>(8));
    b.subscribe(subs.back());
  }
  CHECK(b.broadcast("hello") == 3);
  for (auto& s : subs) CHECK(s->drain() == std::vector<std::string>{"hello"});
  CHECK(b.subscriber_count() == 3);
}

TEST_CASE("a stalled subscriber is dropped and the healthy one keeps order") {
  Broadcaster b;
  auto healthy = std::make_shared<FakeSubscriber>(1000);
  auto stalled = std::make_shared<FakeSubscriber>(16);
  b.subscribe(healthy);
  b.subscribe(stalled);
  std::vector<std::size_t> delivered;
  for (int i = 0; i < 100; ++i) delivered.push_back(b.broadcast("m" + std::to_string(i)));
  auto got = healthy->drain();
  REQUIRE(got.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(got[i] == "m" + std::to_string(i));
  CHECK(stalled->closed);
  CHECK(stalled->queue.size() == 16);
  CHECK(delivered[15] == 2);
  CHECK(delivered[16] == 1);
  CHECK(b.subscriber_count() == 1);
  CHECK(b.dropped_subscribers() == 1);
}

TEST_CASE("unsubscribe") {
  Broadcaster b;
  auto s = std::make_shared<FakeSubscriber>(4);
  auto id = b.subscribe(s);
  b.unsubscribe(id);
  CHECK(b.broadcast("x") == 0);
  CHECK(s->drain().empty());
  CHECK(b.dropped_subscribers() == 0);
}

TEST_CASE("message queue bound") {
  MessageQueue q(2);
  CHECK(q.push(std::make_shared<const std::string>("a")));
  CHECK(q.push(std::make_shared<const std::string>("b")));
  CHECK_FALSE(q.push(std::make_shared<const std::string>("c")));
  CHECK(**q.pop() == "a");
  CHECK(q.size() == 1);
}
