# Test package initialization file