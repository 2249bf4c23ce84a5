#include "doctest.h"
TEST_SUITE("grid") {}
