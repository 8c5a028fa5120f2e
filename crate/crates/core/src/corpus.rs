//! The farmer word problem and the flawed nine-step trace a model produced
//! for it. Step 8 wrongly counts the farmer's own legs, turning the correct
//! total of 98 into 100.

pub const FARMER_QUERY: &str = "A farmer has 15 cows and 23 chickens. He sells 6 cows and buys 8 more chickens. How many total legs are on his farm now?";

pub const FARMER_TRACE: &str = "1.  The farmer starts with 15 cows.
2.  He sells 6 cows, so he has 15 - 6 = 9 cows left.
3.  He starts with 23 chickens.
4.  He buys 8 more chickens, so he has 23 + 8 = 31 chickens.
5.  Cows have 4 legs each, so the cows have 9 * 4 = 36 legs.
6.  Chickens have 2 legs each, so the chickens have 31 * 2 = 62 legs.
7.  The total number of legs is 36 + 62 = 98 legs.
8.  There are also 2 legs for the farmer.
9.  So the total legs on the farm are 98 + 2 = 100.";

pub const FARMER_ANSWER: &str = "98";
