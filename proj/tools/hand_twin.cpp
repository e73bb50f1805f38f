#include "hand_twin/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hand_twin::cli::dispatch(argc, argv, std::cout, std::cerr); }
