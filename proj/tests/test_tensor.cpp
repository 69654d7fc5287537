#include "doctest.h"
#include "lms/tensor.hpp"

using lms::Error;
using lms::ErrorKind;
using lms::Shape;
using lms::Tensor;

TEST_CASE("shape basics") {
  Shape s = Shape::mat(3, 4);
  CHECK(s.rank == 2);
  CHECK(s.size() == 12);
  CHECK(s[0] == 3);
  CHECK(s[1] == 4);
  CHECK(s.str() == "[3x4]");
  CHECK(Shape::scalar().size() == 1);
  CHECK(Shape::scalar().str() == "[scalar]");
  CHECK(Shape::cube(2, 3, 4).size() == 24);
  CHECK(Shape::vec(5) == Shape{5});
  CHECK(Shape::vec(5) != Shape::mat(5, 1));
}

TEST_CASE("shape rejects bad extents") {
  CHECK_THROWS_AS(Shape{0}, Error);
  CHECK_THROWS_AS((Shape{2, -1}), Error);
  CHECK_THROWS_AS((Shape{1, 2, 3, 4}), Error);
  try {
    Shape bad{0};
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
  }
}

TEST_CASE("tensor indexing is row major") {
  Tensor<double> m = Tensor<double>::mat(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(0, 2) == 3);
  CHECK(m.at(1, 0) == 4);
  CHECK(m.at(1, 2) == 6);
  Tensor<double> c(Shape::cube(2, 2, 2));
  c.at(1, 0, 1) = 7;
  CHECK(c.v[5] == 7);
}

TEST_CASE("tensor value count must match shape") {
  CHECK_THROWS_AS(Tensor<double>(Shape::vec(3), {1.0, 2.0}), Error);
}

TEST_CASE("detached copy drops tape identity") {
  Tensor<float> t = Tensor<float>::vec({1, 2});
  t.node = 4;
  Tensor<float> d = t.detached();
  CHECK(!d.tracked());
  CHECK(d.v == t.v);
}
