# Tests for oscigeo
