#include <doctest.h>

#include "beaconscan/url.hpp"
#include "properties.hpp"

using namespace beaconscan;

TEST_CASE("protocol-relative and relative resolution") {
  const auto base = parse_url("http://shop.example.com/");
  const auto pixel = parse_url("//t.example.net/p.gif", base);
  CHECK(pixel.scheme == "http");
  CHECK(pixel.host == "t.example.net");
  CHECK(pixel.path == "/p.gif");

  CHECK(parse_url("img/a.png", parse_url("http://a.com/x/")).serialize() == "http://a.com/x/img/a.png");
  CHECK(parse_url("../b.png", parse_url("http://a.com/x/y/z.html")).serialize() == "http://a.com/x/b.png");
  CHECK(parse_url("?q=2", parse_url("http://a.com/x?q=1")).serialize() == "http://a.com/x?q=2");
  CHECK(parse_url("/root", parse_url("https://a.com:8443/x")).serialize() == "https://a.com:8443/root");
}

TEST_CASE("case folding, ports and queries") {
  const auto url = parse_url("HTTP://A.COM/Q?id=1");
  CHECK(url.scheme == "http");
  CHECK(url.host == "a.com");
  CHECK(url.path == "/Q");
  CHECK(url.query == "id=1");

  CHECK(parse_url("http://a.com:80/").port == 80);
  CHECK(parse_url("http://a.com:80/").serialize() == "http://a.com/");
  CHECK(parse_url("https://a.com").port == 443);
  CHECK(parse_url("http://a.com:8080").serialize() == "http://a.com:8080/");
  CHECK(parse_url("http://a.com/p?").query == "");
  CHECK_FALSE(parse_url("http://a.com/p#frag").query.has_value());
  CHECK(parse_url("http://a.com/a b").path == "/a%20b");
  CHECK(parse_url("http://[::1]:81/x").host == "[::1]");
  CHECK(is_ip_literal("127.0.0.1"));
  CHECK_FALSE(is_ip_literal("256.0.0.1"));
  CHECK_FALSE(is_ip_literal("a.b.c.d"));
}

TEST_CASE("malformed URLs") {
  CHECK_THROWS_AS(parse_url(""), MalformedUrl);
  CHECK_THROWS_AS(parse_url("img/a.png"), MalformedUrl);
  CHECK_THROWS_AS(parse_url("//host/x"), MalformedUrl);
  CHECK_THROWS_AS(parse_url("http://"), MalformedUrl);
  CHECK_THROWS_AS(parse_url("http://a.com:99999/"), MalformedUrl);
  CHECK_THROWS_AS(parse_url("http://a b.com/"), MalformedUrl);
}

TEST_CASE("text helpers") {
  CHECK(percent_decode("a%2Fb%zz%4") == "a/b%zz%4");
  CHECK(to_lower_ascii("MiXeD") == "mixed");
  CHECK(trim_ascii("  x \t") == "x");
}

TEST_CASE("round-trip property") {
  const auto result = fixture::url_round_trip(11, 3000);
  INFO(result.first_failure);
  CHECK(result.ok());
}
