#include "cli.hpp"

int main(int argc, char** argv) { return deleaker::cli::run(argc, argv); }
