# Integration tests package initialization file