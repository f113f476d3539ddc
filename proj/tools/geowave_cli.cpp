#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return geowave::cli::run(argc, argv, std::cout); }
