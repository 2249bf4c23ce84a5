#include "doctest.h"
TEST_SUITE("levy") {}
