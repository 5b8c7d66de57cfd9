# Unit tests package initialization file