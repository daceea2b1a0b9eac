#include "tvq/experiments.hpp"

int main(int argc, char** argv) { return tvq::run_cli(argc, argv); }
